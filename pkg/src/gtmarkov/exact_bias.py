"""Exact Good-Turing bias for rank-2 chains.

Removing one state x from a rank-2 chain collapses the no-visit dynamics
onto a 2x2 transfer matrix whose two eigenvalues drive every occupancy
probability. This module evaluates

* no-visit probabilities conditioned on X_m = x / X_m != x,
* the per-state averaged difference Gamma_x,
* Pr(F_x = 0), Pr(F_x = 1) and the exact bias E[G0 - M0],

in O(log n) closed form when the eigenvalues separate and by matrix
power / linear recurrence when they nearly coincide (the closed forms
divide by powers of the eigenvalue gap). Two independent oracles are
included: full sequence enumeration and a K-state occupancy DP.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chains import (
    Rank2Decomposition,
    ReducibleError,
    RowClassChain,
    stationary_distribution,
)

# below this eigenvalue gap the system is treated as having a repeated root
DEGENERATE_TOL = 1e-8
# the closed forms divide by the gap up to three times; they are used only
# when the gap clears this floor and the expansion coefficients stay O(1),
# otherwise the exact matrix-power / linear-recurrence route takes over
CLOSED_FORM_MIN_GAP = 1e-6
COEFF_LIMIT = 8.0
_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class PerStateSpectral:
    """Spectral data of the leave-one-state-out transfer system.

    delta_x is the nonnegative root of the discriminant; when the
    discriminant is negative (complex eigenvalue pair) delta_x, lam1 and
    lam2 are nan and downstream computations switch to complex or matrix
    arithmetic internally.
    """

    x: int
    pi_x: float
    v_x: float
    u_x: float
    w_x: float
    s_x: float
    delta_x: float
    lam1: float
    lam2: float


@dataclass(frozen=True)
class TwoByTwo:
    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def identity(cls) -> "TwoByTwo":
        return cls(1.0, 0.0, 0.0, 1.0)

    def __matmul__(self, other: "TwoByTwo") -> "TwoByTwo":
        return TwoByTwo(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21


@dataclass(frozen=True)
class OccupancyTail:
    p0: float
    p1: float

    def __post_init__(self):
        for name, p in (("p0", self.p0), ("p1", self.p1)):
            if not -1e-12 <= p <= 1.0 + 1e-12:
                raise ValueError(f"{name} = {p!r} outside [0,1]")
        if self.p0 + self.p1 > 1.0 + 1e-12:
            raise ValueError(f"p0 + p1 = {self.p0 + self.p1!r} exceeds 1")


class BiasCell(NamedTuple):
    """One group of states sharing (pi_x, v_x, u_x)."""

    start: int
    size: int
    pi_x: float
    gamma: float
    p0: float
    p1: float
    contribution: float  # per state: p1/n - pi_x * p0


@dataclass(frozen=True)
class BiasReport:
    n: int
    exact_bias: float
    cells: tuple[BiasCell, ...]

    @property
    def per_state(self) -> list[tuple[int, float, float, float, float]]:
        """(x, gamma_x, p0, p1, contribution) for every state."""
        out = []
        for cell in self.cells:
            for x in range(cell.start, cell.start + cell.size):
                out.append((x, cell.gamma, cell.p0, cell.p1, cell.contribution))
        return out


def _transfer(diag: bool, eta: float, pi_x: float, v_x: float, u_x: float) -> TwoByTwo:
    w = v_x * u_x
    if diag:
        return TwoByTwo(1.0 - pi_x, -eta * pi_x * v_x, -u_x, eta * (1.0 - w))
    return TwoByTwo(1.0 - pi_x, -pi_x * v_x, -u_x, -w)


def srd_matrix(decomp: Rank2Decomposition, x: int) -> TwoByTwo:
    """The 2x2 transfer matrix of the chain with state x's column zeroed."""
    pi_x, v_x, u_x = decomp.per_state(x)
    return _transfer(decomp.diagonalizable, decomp.eta, pi_x, v_x, u_x)


def srd_power(m: TwoByTwo, l: int) -> TwoByTwo:
    """m**l by repeated squaring."""
    if l < 0:
        raise ValueError("power must be >= 0")
    result = TwoByTwo.identity()
    base = m
    while l:
        if l & 1:
            result = result @ base
        base = base @ base
        l >>= 1
    return result


def _lam_pair(tr: float, det: float):
    """Eigenvalues of a 2x2 with given trace/determinant, plus their gap.

    Returns floats when the discriminant is nonnegative, otherwise the
    complex conjugate pair (gap purely imaginary).
    """
    disc = tr * tr - 4.0 * det
    if disc >= 0.0:
        gap = math.sqrt(disc)
        return 0.5 * (tr + gap), 0.5 * (tr - gap), gap
    gap = cmath.sqrt(complex(disc, 0.0))
    return 0.5 * (tr + gap), 0.5 * (tr - gap), gap


def per_state_spectral(decomp: Rank2Decomposition, x: int) -> PerStateSpectral:
    pi_x, v_x, u_x = decomp.per_state(x)
    w = v_x * u_x
    m = _transfer(decomp.diagonalizable, decomp.eta, pi_x, v_x, u_x)
    lam1, lam2, gap = _lam_pair(m.trace, m.det)
    beta_bar = decomp.eta if decomp.diagonalizable else 0.0
    s = 1.0 - pi_x - beta_bar * (1.0 - w)
    if isinstance(gap, complex):
        return PerStateSpectral(
            x, pi_x, v_x, u_x, w, s, math.nan, math.nan, math.nan
        )
    return PerStateSpectral(x, pi_x, v_x, u_x, w, s, gap, lam1, lam2)


def _real(value, context: str) -> float:
    if isinstance(value, complex):
        if abs(value.imag) > _IMAG_TOL * max(1.0, abs(value.real)):
            raise ArithmeticError(
                f"{context}: imaginary residue {value.imag:.2e} too large"
            )
        return value.real
    return float(value)


def _power_diff_ratio(lam1, lam2, k: int, gap):
    """(lam1**k - lam2**k) / (lam1 - lam2) with an explicit equal-eigenvalue
    limit (k * mid**(k-1)) to dodge 0/0 cancellation."""
    if k <= 0:
        return 0.0
    if abs(gap) < DEGENERATE_TOL:
        mid = 0.5 * (lam1 + lam2)
        return k * mid ** (k - 1)
    return (lam1**k - lam2**k) / gap


def _clip01(p: float, slack: float = 1e-10, context: str = "probability") -> float:
    if not -slack <= p <= 1.0 + slack:
        raise ArithmeticError(f"{context} = {p!r} outside [0,1] beyond slack")
    return min(1.0, max(0.0, p))


class _Cell:
    """All leave-x-out quantities for one (pi_x, v_x, u_x) group."""

    def __init__(self, decomp: Rank2Decomposition, pi_x: float, v_x: float, u_x: float):
        self.pi_x = pi_x
        self.v_x = v_x
        self.u_x = u_x
        self.w = v_x * u_x
        self.pi_bar = 1.0 - pi_x
        if self.pi_bar <= 0.0:
            raise ValueError("state carries all the mass")
        self.diag = decomp.diagonalizable
        self.eta = decomp.eta
        self.m = _transfer(self.diag, self.eta, pi_x, v_x, u_x)
        self.lam1, self.lam2, self.gap = _lam_pair(self.m.trace, self.m.det)
        self.degenerate = abs(self.gap) < DEGENERATE_TOL
        # boundary vectors of the transfer identities: row_q conditions on
        # X_m != x, row_g on X_m = x; col closes the row sum
        self.row_q = (1.0, -self.eta * pi_x * v_x / self.pi_bar)
        self.row_g = (1.0, self.eta * v_x)
        self.col = (self.pi_bar, -u_x)
        self.g1 = self.pi_bar - self.eta * self.w  # = 1 - P_xx
        self.use_closed = False
        if self.w != 0.0 and abs(self.gap) >= CLOSED_FORM_MIN_GAP:
            # anchored expansion weights; a near-Jordan pair drives them to
            # ~1/gap and the closed forms lose all their digits
            self.ga = (self.g1 - self.lam2) / self.gap
            self.gb = 1.0 - self.ga
            q0 = self._bilinear(self.row_q, TwoByTwo.identity())
            q1 = self._bilinear(self.row_q, self.m)
            self.qa = (q1 - self.lam2 * q0) / self.gap
            self.qb = q0 - self.qa
            self.use_closed = (
                max(abs(self.ga), abs(self.gb), abs(self.qa), abs(self.qb))
                <= COEFF_LIMIT
            )

    def _bilinear(self, row, m: TwoByTwo) -> float:
        left = (
            row[0] * m.a11 + row[1] * m.a21,
            row[0] * m.a12 + row[1] * m.a22,
        )
        return left[0] * self.col[0] + left[1] * self.col[1]

    def q_not(self, n: int) -> float:
        """Pr(no visit to x among the other n-1 samples | X_m != x)."""
        if self.w == 0.0:
            return self.pi_bar ** (n - 1)
        if not self.use_closed:
            return self._bilinear(self.row_q, srd_power(self.m, n - 2))
        return _real(
            self.qa * self.lam1 ** (n - 2) + self.qb * self.lam2 ** (n - 2),
            "q_not",
        )

    def g_closed(self, l: int) -> float:
        """g(l) = Pr(avoid x for l more steps | at x) = A lam1^l + B lam2^l,
        anchored on g(0) = 1 and g(1) = 1 - P_xx."""
        if self.w == 0.0:
            return self.pi_bar**l
        return _real(self.ga * self.lam1**l + self.gb * self.lam2**l, "g")

    def g_array(self, top: int) -> np.ndarray:
        """g(0..top) by the trace/determinant linear recurrence (stable:
        both eigenvalue moduli are below 1)."""
        g = np.empty(top + 1)
        g[0] = 1.0
        if top >= 1:
            g[1] = self.g1
        tr, det = self.m.trace, self.m.det
        for l in range(2, top + 1):
            g[l] = tr * g[l - 1] - det * g[l - 2]
        return g

    def sum_q_given_x(self, n: int) -> float:
        """sum over m = 1..n of Pr(no visit | X_m = x)."""
        if self.w == 0.0:
            return n * self.pi_bar ** (n - 1)
        if not self.use_closed:
            g = self.g_array(n - 1)
            inner = float(np.dot(g[1 : n - 1], g[1 : n - 1][::-1])) if n > 2 else 0.0
            return 2.0 * g[n - 1] + inner
        a, b = self.ga, self.gb
        gn1 = a * self.lam1 ** (n - 1) + b * self.lam2 ** (n - 1)
        even = a * a * self.lam1 ** (n - 1) + b * b * self.lam2 ** (n - 1)
        cross = (
            2.0
            * a
            * b
            * self.lam1
            * self.lam2
            * _power_diff_ratio(self.lam1, self.lam2, n - 2, self.gap)
        )
        return _real(2.0 * gn1 + (n - 2) * even + cross, "sum_q")

    def tail(self, n: int) -> OccupancyTail:
        p0 = _clip01(self.pi_bar * self.q_not(n), context="p0")
        p1 = _clip01(self.pi_x * self.sum_q_given_x(n), context="p1")
        return OccupancyTail(p0, p1)

    def gamma(self, n: int) -> float:
        if self.w == 0.0:
            return 0.0
        if not self.use_closed:
            return self.sum_q_given_x(n) / n - self.q_not(n)
        # eigenvalue-gap expansion of the averaged difference
        pref = self.eta * self.w if self.diag else self.w
        beff = (1.0 - self.eta) if self.diag else 1.0
        l1n1 = self.lam1 ** (n - 1)
        l2n1 = self.lam2 ** (n - 1)
        term1 = (l2n1 - l1n1) / (self.gap * self.pi_bar)
        term2 = -(l1n1 + l2n1) * (1.0 - 2.0 / n) * beff / self.gap**2
        term3 = (
            (2.0 / n)
            * (beff / self.gap**3)
            * self.lam1
            * self.lam2
            * (self.lam1 ** (n - 2) - self.lam2 ** (n - 2))
        )
        return _real(pref * (term1 + term2 + term3), "gamma")


def _cell_of(decomp: Rank2Decomposition, x: int) -> _Cell:
    pi_x, v_x, u_x = decomp.per_state(x)
    return _Cell(decomp, pi_x, v_x, u_x)


def prob_no_visit_given_not_x(decomp: Rank2Decomposition, x: int, n: int) -> float:
    """Pr(F_x(X^n without sample m) = 0 | X_m != x); the same for every m."""
    if n < 2:
        raise ValueError("need n >= 2")
    return _clip01(_cell_of(decomp, x).q_not(n), context="q_not")


def prob_no_visit_given_x(decomp: Rank2Decomposition, x: int, n: int, m: int) -> float:
    """Pr(F_x(X^n without sample m) = 0 | X_m = x)."""
    if n < 2:
        raise ValueError("need n >= 2")
    if not 1 <= m <= n:
        raise ValueError(f"m = {m} outside 1..{n}")
    cell = _cell_of(decomp, x)
    if cell.w == 0.0:
        return cell.pi_bar ** (n - 1)
    if not cell.use_closed:
        g = cell.g_array(n - 1)
        value = g[n - 1] if m in (1, n) else g[m - 1] * g[n - m]
    elif m in (1, n):
        value = cell.g_closed(n - 1)
    else:
        value = cell.g_closed(m - 1) * cell.g_closed(n - m)
    return _clip01(value, context="q_given_x")


def gamma_x(decomp: Rank2Decomposition, x: int, n: int) -> float:
    """Averaged no-visit difference Gamma_x; exactly 0 when v_x u_x = 0."""
    if n < 3:
        raise ValueError("need n >= 3")
    return _cell_of(decomp, x).gamma(n)


def occupancy_tail(decomp: Rank2Decomposition, x: int, n: int) -> OccupancyTail:
    """Pr(F_x = 0) and Pr(F_x = 1) over n stationary samples."""
    if n < 2:
        raise ValueError("need n >= 2")
    cell = _cell_of(decomp, x)
    if cell.pi_x == 0.0:
        return OccupancyTail(1.0, 0.0)
    return cell.tail(n)


def exact_bias(decomp: Rank2Decomposition, n: int) -> BiasReport:
    """E[G0 - M0] with the per-state occupancy table.

    States are processed per band (identical (pi_x, v_x, u_x) triples), so
    the cost is O(#bands * log n) regardless of K.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    if decomp.beta == 0.0:
        raise ReducibleError("chain is reducible (spectral gap 0)")
    bands = decomp.bands
    cells = []
    total = 0.0
    for b in range(bands.count):
        pi_x = float(decomp.pi_bands[b])
        size = int(bands.sizes[b])
        start = int(bands.starts[b])
        if pi_x == 0.0:
            cells.append(BiasCell(start, size, 0.0, 0.0, 1.0, 0.0, 0.0))
            continue
        cell = _Cell(decomp, pi_x, float(decomp.v_bands[b]), float(decomp.u_bands[b]))
        tail = cell.tail(n)
        gamma = cell.gamma(n)
        contribution = tail.p1 / n - pi_x * tail.p0
        cells.append(
            BiasCell(start, size, pi_x, gamma, tail.p0, tail.p1, contribution)
        )
        total += size * contribution
    return BiasReport(n, total, tuple(cells))


def exact_bias_periodic(n: int, r: int) -> float:
    """Bias magnitude (r/n)(1 - r/n)^(n/r - 1) of the r-block periodic
    family sampled n times; 0**0 is taken as 1, so r = n gives 1."""
    if r < 1:
        raise ValueError("need r >= 1")
    if r > n:
        raise ValueError("need r <= n")
    ratio = r / n
    return ratio * (1.0 - ratio) ** (n / r - 1.0)


def brute_force_bias(chain: RowClassChain, n: int, chunk: int = 1 << 14) -> float:
    """E[G0 - M0] by exhaustive enumeration of all K^n sequences."""
    total_seqs = chain.K**n
    if total_seqs > 10**7:
        raise ValueError(f"K^n = {total_seqs} exceeds the 1e7 guard")
    P = chain.dense()
    pi = stationary_distribution(chain, allow_reducible=True).probs
    K = chain.K
    total = 0.0
    for lo in range(0, total_seqs, chunk):
        idx = np.arange(lo, min(lo + chunk, total_seqs), dtype=np.int64)
        states = np.empty((len(idx), n), dtype=np.int64)
        rem = idx.copy()
        for pos in range(n - 1, -1, -1):
            states[:, pos] = rem % K
            rem //= K
        weight = pi[states[:, 0]]
        for pos in range(1, n):
            weight = weight * P[states[:, pos - 1], states[:, pos]]
        singletons = np.zeros(len(idx))
        missing = np.zeros(len(idx))
        for x in range(K):
            cnt = (states == x).sum(axis=1)
            singletons += cnt == 1
            missing += pi[x] * (cnt == 0)
        total += float(np.dot(weight, singletons / n - missing))
    return total


def transfer_matrix_tail(chain: RowClassChain, x: int, n: int) -> OccupancyTail:
    """Pr(F_x = 0), Pr(F_x = 1) by an exact DP over row classes.

    Tracks stationary mass split by (visit count so far in {0, 1},
    current row class, whether currently at x); O(n * #classes^2).
    """
    if chain.K > 4096:
        raise ValueError("DP oracle limited to K <= 4096")
    if n > 10**6:
        raise ValueError("DP oracle limited to n <= 1e6")
    if n < 1:
        raise ValueError("need n >= 1")
    bands = chain.bands
    b_x = int(np.searchsorted(bands.starts, x, side="right")) - 1
    c_x = int(bands.owner[b_x])
    rho_x = bands.class_mass[:, b_x].copy()  # per-class mass on state x
    step = chain.quotient.copy()
    step[:, c_x] -= rho_x  # transitions that avoid landing on x
    pi = stationary_distribution(chain, allow_reducible=True)
    pi_x = pi.mass_at(x)
    z = np.zeros(chain.n_classes)
    for b in range(bands.count):
        z[bands.owner[b]] += pi.mass_at(int(bands.starts[b])) * bands.sizes[b]
    z[c_x] -= pi_x  # mass starting anywhere but x, zero visits
    one = np.zeros(chain.n_classes)  # one visit, currently elsewhere
    at_x = pi_x  # one visit, currently at x
    for _ in range(n - 1):
        new_at_x = float(z @ rho_x)
        one = one @ step + at_x * step[c_x]
        z = z @ step
        at_x = new_at_x
    return OccupancyTail(float(z.sum()), float(one.sum() + at_x))
