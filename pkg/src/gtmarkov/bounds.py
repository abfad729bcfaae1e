"""Bias upper bounds for the missing-mass estimator on rank-2 chains.

Every bound decomposes into three audited terms: a low-mass term covering
states with stationary mass at most delta, a tail term covering the
remaining states through an occupancy tail probability, and a literal 1/n
residual. The two specializations pick delta from the contraction
coefficient or from the weighted spectral norm and substitute the matching
concentration tail; inapplicability (precondition failure) is reported as
data so grid sweeps can render it, not raised, unless strict mode is on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import Rank2Decomposition, build_family, even_k1, rank2_decompose
from .exact_bias import ReducibleError, exact_bias, occupancy_tail
from .params import SpectralParams, compute_params


class InapplicableError(ValueError):
    """A bound's contraction or spectral-norm precondition fails."""


@dataclass(frozen=True)
class BoundConstants:
    """Tunable constants of the bias bounds.

    c1 and c2 scale the low-mass term; C_naor scales the weighted-norm
    tail; c_exponent sets the threshold decay rate n**-c_exponent of the
    contraction-driven bound; q is the moment order of the weighted-norm
    tail (None means 3 ln n, resolved per call).
    """

    c1: float = 42.0
    c2: float = 162.0
    C_naor: float = 1.0
    c_exponent: float = 0.25
    q: float | None = None

    def __post_init__(self) -> None:
        if not (self.c1 > 0.0 and self.c2 > 0.0):
            raise ValueError("c1 and c2 must be positive")
        if not 0.0 < self.c_exponent < 0.5:
            raise ValueError("c_exponent must lie in (0, 0.5)")
        if self.q is not None and self.q < 2.0:
            raise ValueError("q must be at least 2")

    def q_at(self, n: int) -> float:
        """Moment order used at sample size n."""
        return self.q if self.q is not None else 3.0 * math.log(n)


@dataclass(frozen=True)
class StatePartition:
    """States whose self-loop differs from their stationary mass, split
    into mass <= delta (low) and mass > delta (high).

    Bands index the decomposition's band arrays; states inside a band share
    (pi_x, v_x, u_x), so tail maximization over the high side needs one
    representative state per band. Counts are numbers of states.
    """

    delta: float
    low_bands: tuple[int, ...]
    high_bands: tuple[int, ...]
    low_count: int
    high_count: int


@dataclass(frozen=True)
class BoundReport:
    """One bound evaluation, split into auditable terms.

    total = low_mass_term + tail_term + residual_term. When applicable is
    False, reason says which precondition failed; numeric fields are still
    filled in when they evaluate to something finite, nan otherwise.
    """

    delta: float
    low_mass_term: float
    tail_term: float
    residual_term: float
    total: float
    applicable: bool
    reason: str = ""


def kontorovich_tail(pi_x: float, n: int, theta: float, epsilon: float) -> float:
    """Contraction-coefficient tail bound on Pr(F_x <= 1), clamped to 1.

    pi_x is accepted for signature parity with naor_tail; the bound itself
    does not depend on it.
    """
    if theta >= 1.0:
        raise InapplicableError("theta >= 1: no contraction, tail bound unavailable")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return min(1.0, 2.0 * math.exp(-0.5 * n * (1.0 - theta) ** 2 * epsilon**2))


def naor_tail(
    pi_x: float,
    n: int,
    lambda_pi: float,
    epsilon: float,
    q: float | None = None,
    C: float = 1.0,
) -> float:
    """Weighted-spectral-norm tail bound on Pr(F_x <= 1), clamped to 1."""
    if lambda_pi >= 1.0:
        raise InapplicableError("lambda_pi >= 1: weighted-norm tail unavailable")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if q is None:
        q = 3.0 * math.log(n)
    if q < 2.0:
        raise ValueError("q must be at least 2")
    rate = q / ((1.0 - lambda_pi) * n)
    return min(1.0, C * rate ** (q / 2.0) * pi_x * epsilon**-q)


def partition_states(decomp: Rank2Decomposition, delta: float) -> StatePartition:
    """Split the states with P_xx != pi_x at mass threshold delta.

    P_xx - pi_x = eta * v_x * u_x, so only bands with eta * w_x != 0
    participate; the rest contribute nothing to the bias.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    w = decomp.v_bands * decomp.u_bands
    if decomp.eta == 0.0:
        active = np.zeros(w.shape, dtype=bool)
    else:
        active = w != 0.0
    sizes = decomp.bands.sizes
    low_mask = active & (decomp.pi_bands <= delta)
    high_mask = active & (decomp.pi_bands > delta)
    return StatePartition(
        delta=delta,
        low_bands=tuple(int(b) for b in np.flatnonzero(low_mask)),
        high_bands=tuple(int(b) for b in np.flatnonzero(high_mask)),
        low_count=int(sizes[low_mask].sum()),
        high_count=int(sizes[high_mask].sum()),
    )


def theorem1_bound(
    decomp: Rank2Decomposition,
    params: SpectralParams,
    n: int,
    delta: float,
    tail=None,
    consts: BoundConstants | None = None,
) -> BoundReport:
    """Three-term bias bound at mass threshold delta in (1/n, beta/5].

    tail(x, n) must upper-bound Pr(F_x <= 1) for a state of mass > delta;
    the default is the exact occupancy tail, the tightest valid choice.
    Raises ReducibleError when beta = 0 (the bias does not vanish there)
    and ValueError when delta is out of range.
    """
    consts = consts if consts is not None else BoundConstants()
    beta = params.beta
    if beta <= 0.0:
        raise ReducibleError("beta = 0: chain is reducible, no vanishing bias bound")
    if not 1.0 / n < delta <= beta / 5.0:
        raise ValueError(
            f"delta = {delta!r} outside (1/n, beta/5] = ({1.0 / n!r}, {beta / 5.0!r}]"
        )
    if tail is None:

        def tail(x: int, m: int) -> float:
            t = occupancy_tail(decomp, x, m)
            return t.p0 + t.p1

    part = partition_states(decomp, delta)
    starts = decomp.bands.starts
    low_mass = (delta / beta) * (consts.c1 + consts.c2 / (n * beta))
    tail_term = 2.0 * max(
        (tail(int(starts[b]), n) for b in part.high_bands), default=0.0
    )
    residual = 1.0 / n
    total = low_mass + tail_term + residual
    return BoundReport(delta, low_mass, tail_term, residual, total, True, "")


def _report(
    delta: float,
    low_mass: float,
    tail_term: float,
    residual: float,
    reason: str,
    strict: bool,
) -> BoundReport:
    applicable = reason == ""
    if strict and not applicable:
        raise InapplicableError(reason)
    total = low_mass + tail_term + residual
    return BoundReport(delta, low_mass, tail_term, residual, total, applicable, reason)


def corollary1_bound(
    decomp: Rank2Decomposition,
    params: SpectralParams,
    n: int,
    consts: BoundConstants | None = None,
    strict: bool = False,
) -> BoundReport:
    """Contraction-driven bound with delta = 1/((1-theta) n**c) + 1/n.

    Applicable when theta < 1 and beta >= 5/((1-theta) n**c) + 5/n. With
    c near 0.5 the low-mass term decays like n**-(2 kappa - 3/2) on the
    K1 = n**kappa chain families.
    """
    consts = consts if consts is not None else BoundConstants()
    beta, theta = params.beta, params.theta
    c = consts.c_exponent
    residual = 1.0 / n
    if theta >= 1.0:
        nan = math.nan
        return _report(nan, nan, nan, residual, "theta = 1: no contraction", strict)
    delta = 1.0 / ((1.0 - theta) * n**c) + 1.0 / n
    beta_floor = 5.0 / ((1.0 - theta) * n**c) + 5.0 / n
    if beta > 0.0:
        low_mass = (delta / beta) * (consts.c1 + consts.c2 / (n * beta))
    else:
        low_mass = math.inf
    tail_term = 4.0 * math.exp(-0.5 * n ** (1.0 - 2.0 * c))
    reason = ""
    if beta < beta_floor:
        reason = f"beta = {beta:.6g} below required {beta_floor:.6g}"
    return _report(delta, low_mass, tail_term, residual, reason, strict)


def corollary2_bound(
    decomp: Rank2Decomposition,
    params: SpectralParams,
    n: int,
    consts: BoundConstants | None = None,
    strict: bool = False,
) -> BoundReport:
    """Weighted-norm-driven bound, delta = 3 sqrt(ln n/((1-lambda_pi) n)) + 1/n.

    Applicable when lambda_pi < 1 and beta >= 15 sqrt(ln n/((1-lambda_pi) n))
    + 5/n; the tail term is 2 C / n**1.5.
    """
    consts = consts if consts is not None else BoundConstants()
    beta, lam = params.beta, params.lambda_pi
    residual = 1.0 / n
    if lam >= 1.0 - 1e-12:
        nan = math.nan
        return _report(
            nan, nan, nan, residual, "lambda_pi = 1: weighted norm too large", strict
        )
    root = math.sqrt(math.log(n) / ((1.0 - lam) * n))
    delta = 3.0 * root + 1.0 / n
    beta_floor = 15.0 * root + 5.0 / n
    if beta > 0.0:
        low_mass = (delta / beta) * (consts.c1 + consts.c2 / (n * beta))
    else:
        low_mass = math.inf
    tail_term = 2.0 * consts.C_naor / n**1.5
    reason = ""
    if beta < beta_floor:
        reason = f"beta = {beta:.6g} below required {beta_floor:.6g}"
    return _report(delta, low_mass, tail_term, residual, reason, strict)


@dataclass(frozen=True)
class BoundRateRow:
    """One grid point of a bound-vs-exact rate table (K = n chain)."""

    n: int
    k1: int
    bound1: BoundReport
    bound2: BoundReport
    exact: float


@dataclass(frozen=True)
class BoundRateTable:
    """Bound and exact-bias decay rates on a K = n family grid.

    Slopes are log-log fits over the rows where the bound is applicable
    (None when fewer than three such rows); the sqrt(ln n) factor is
    divided out of the second bound's totals before fitting.
    """

    family: str
    kappa: float
    rows: tuple[BoundRateRow, ...]
    bound1_slope: float | None
    bound2_slope: float | None
    exact_slope: float | None


def bound_rate_table(
    family: str,
    kappa: float,
    n_grid,
    consts: BoundConstants | None = None,
) -> BoundRateTable:
    """Evaluate both specialized bounds and the exact bias over K = n.

    The default c_exponent here is 0.49, near the top of (0, 0.5): the
    contraction bound's rate approaches its clean power law and its
    applicability region is widest there. Pass consts to override.
    """
    from .simulate import rate_fit

    consts = consts if consts is not None else BoundConstants(c_exponent=0.49)
    rows = []
    for n in n_grid:
        n = int(n)
        if family in ("p1", "p2", "p3"):
            k1 = even_k1(n, kappa)
            chain = build_family(family, n, K1=k1)
        else:
            k1 = 0
            chain = build_family(family, n)
        decomp = rank2_decompose(chain)
        params = compute_params(chain, decomp)
        b1 = corollary1_bound(decomp, params, n, consts)
        b2 = corollary2_bound(decomp, params, n, consts)
        rows.append(BoundRateRow(n, k1, b1, b2, exact_bias(decomp, n).exact_bias))

    def fit(points: list[tuple[int, float]]) -> float | None:
        if len(points) < 3 or any(v <= 0.0 for _, v in points):
            return None
        slope, _, _ = rate_fit(points)
        return slope

    bound1_slope = fit([(r.n, r.bound1.total) for r in rows if r.bound1.applicable])
    bound2_slope = fit(
        [
            (r.n, r.bound2.total / math.sqrt(math.log(r.n)))
            for r in rows
            if r.bound2.applicable
        ]
    )
    exact_slope = fit([(r.n, abs(r.exact)) for r in rows])
    return BoundRateTable(
        family, kappa, tuple(rows), bound1_slope, bound2_slope, exact_slope
    )
