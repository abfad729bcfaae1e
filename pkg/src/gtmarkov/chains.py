"""Row-class Markov chains and their rank-2 spectral decomposition.

This module provides:

* ``Distribution``: a probability vector stored as block runs so that
  chains with thousands of states stay cheap to build and query.
* ``RowClassChain``: a transition matrix represented by its distinct rows
  (row classes) plus a state-to-class assignment.
* builders for the chain families used throughout the package
  (iid, sticky, the three block families p1/p2/p3, periodic Kronecker,
  reducible two-block).
* ``stationary_distribution`` and ``rank2_decompose``, which work on the
  small quotient system over row classes and lift the results to states.

States are 0-indexed everywhere.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

DENSE_LIMIT = 64
RANK_TOL = 1e-8
NONDIAG_LAMBDA_TOL = 1e-9
SNAP_TOL = 1e-12


class RankTooHighError(ValueError):
    """The transition matrix has numerical rank greater than 2."""


class ReducibleError(ValueError):
    """The chain has no unique stationary distribution."""


class DecompositionError(ValueError):
    """The rank-2 decomposition failed to satisfy its invariants."""


@dataclass(frozen=True)
class Distribution:
    """Probability mass over states 0..K-1, stored as block runs.

    ``blocks`` is a tuple of (start, length, per_state_mass) runs covering
    only the states with nonzero mass; runs are sorted, non-overlapping and
    non-adjacent-with-equal-mass (canonical form).
    """

    K: int
    blocks: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        prev_end = 0
        total = 0.0
        for start, length, mass in self.blocks:
            if length < 1 or start < prev_end or start + length > self.K:
                raise ValueError(f"malformed block run {(start, length, mass)}")
            if mass < 0:
                raise ValueError(f"negative mass {mass} at state {start}")
            prev_end = start + length
            total += length * mass
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {total!r}, not 1 within 1e-12")

    @classmethod
    def uniform(cls, K: int) -> "Distribution":
        return cls(K, ((0, K, 1.0 / K),))

    @classmethod
    def from_probs(cls, probs) -> "Distribution":
        """Compress a dense probability vector into canonical block runs."""
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1:
            raise ValueError("probs must be a vector")
        return cls(len(probs), _compress_runs(probs))

    @cached_property
    def probs(self) -> np.ndarray:
        """Dense probability vector (length K)."""
        out = np.zeros(self.K)
        for start, length, mass in self.blocks:
            out[start : start + length] = mass
        return out

    def mass_at(self, state: int) -> float:
        for start, length, mass in self.blocks:
            if start <= state < start + length:
                return mass
        return 0.0

    @property
    def support_size(self) -> int:
        return sum(length for _, length, _ in self.blocks)


def _compress_runs(values: np.ndarray, keep_zeros: bool = False):
    """Run-length encode a vector into (start, length, value) tuples."""
    runs = []
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        if keep_zeros or values[i] != 0.0:
            runs.append((i, j - i + 1, float(values[i])))
        i = j + 1
    return tuple(runs)


@dataclass(frozen=True)
class Bands:
    """Maximal state intervals on which every row class and the class
    assignment are constant.

    Attributes
    ----------
    starts, sizes : int arrays of shape (B,)
    owner : int array (B,), row-class index of the states in each band
    class_mass : float array (C, B), per-state mass that class c's row
        places on any single state of band b
    """

    starts: np.ndarray
    sizes: np.ndarray
    owner: np.ndarray
    class_mass: np.ndarray

    @property
    def count(self) -> int:
        return len(self.starts)


class RowClassChain:
    """A transition matrix given by its distinct rows and an assignment.

    Immutable after construction; all derived structure is cached.
    """

    def __init__(self, K: int, row_classes, assignment):
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.shape != (K,):
            raise ValueError(f"assignment must have shape ({K},)")
        row_classes = tuple(row_classes)
        if not row_classes:
            raise ValueError("need at least one row class")
        for dist in row_classes:
            if dist.K != K:
                raise ValueError("row class dimension mismatch")
        used = np.unique(assignment)
        if used.min() < 0 or used.max() >= len(row_classes):
            raise ValueError("assignment references unknown row class")
        if len(used) != len(row_classes):
            raise ValueError("every row class must be referenced at least once")
        self.K = K
        self.row_classes = row_classes
        self.assignment = assignment
        self.assignment.setflags(write=False)

    @property
    def n_classes(self) -> int:
        return len(self.row_classes)

    @cached_property
    def bands(self) -> Bands:
        cuts = {0, self.K}
        for dist in self.row_classes:
            for start, length, _ in dist.blocks:
                cuts.add(start)
                cuts.add(start + length)
        change = np.nonzero(np.diff(self.assignment))[0]
        cuts.update(int(i) + 1 for i in change)
        edges = np.array(sorted(cuts), dtype=np.int64)
        starts = edges[:-1]
        sizes = np.diff(edges)
        owner = self.assignment[starts]
        class_mass = np.empty((self.n_classes, len(starts)))
        for c, dist in enumerate(self.row_classes):
            for b, s in enumerate(starts):
                class_mass[c, b] = dist.mass_at(int(s))
        class_mass.setflags(write=False)
        return Bands(starts, sizes, owner, class_mass)

    @cached_property
    def quotient(self) -> np.ndarray:
        """C x C row-stochastic matrix of total class-to-class mass."""
        bands = self.bands
        C = self.n_classes
        q = np.zeros((C, C))
        weighted = bands.class_mass * bands.sizes
        for c_to in range(C):
            cols = bands.owner == c_to
            q[:, c_to] = weighted[:, cols].sum(axis=1)
        return q

    @cached_property
    def trace(self) -> float:
        bands = self.bands
        return float(np.sum(bands.sizes * bands.class_mass[bands.owner, np.arange(bands.count)]))

    def dense(self, limit: int = 4096) -> np.ndarray:
        """Materialize the full K x K matrix (guarded by ``limit``)."""
        if self.K > limit:
            raise ValueError(f"refusing to materialize K={self.K} > {limit}")
        rows = np.stack([dist.probs for dist in self.row_classes])
        return rows[self.assignment]

    def class_of(self, state: int) -> int:
        return int(self.assignment[state])

    def to_json(self) -> str:
        runs = _compress_runs(self.assignment.astype(float), keep_zeros=True)
        payload = {
            "K": self.K,
            "row_classes": [[list(b) for b in dist.blocks] for dist in self.row_classes],
            "assignment": [[int(s), int(l), int(c)] for s, l, c in runs],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "RowClassChain":
        payload = json.loads(text)
        K = payload["K"]
        row_classes = [
            Distribution(K, tuple((int(s), int(l), float(m)) for s, l, m in blocks))
            for blocks in payload["row_classes"]
        ]
        assignment = np.empty(K, dtype=np.int64)
        for start, length, c in payload["assignment"]:
            assignment[start : start + length] = c
        return cls(K, row_classes, assignment)

    @classmethod
    def from_dense(cls, matrix) -> "RowClassChain":
        """Build from a dense row-stochastic matrix, grouping equal rows."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        K = matrix.shape[0]
        if K > DENSE_LIMIT:
            raise ValueError(f"dense import limited to K <= {DENSE_LIMIT}")
        row_sums = matrix.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > 1e-12:
            raise ValueError("matrix is not row-stochastic within 1e-12")
        if matrix.min() < 0:
            raise ValueError("matrix has negative entries")
        keys: dict[bytes, int] = {}
        assignment = np.empty(K, dtype=np.int64)
        row_classes = []
        for i in range(K):
            key = matrix[i].tobytes()
            if key not in keys:
                keys[key] = len(row_classes)
                row_classes.append(Distribution.from_probs(matrix[i]))
            assignment[i] = keys[key]
        return cls(K, row_classes, assignment)

    @classmethod
    def from_csv(cls, path) -> "RowClassChain":
        return cls.from_dense(np.loadtxt(path, delimiter=",", ndmin=2))


def _check_distribution(pi: Distribution, allow_zero_support: bool = True):
    if pi.support_size < pi.K:
        if not allow_zero_support:
            raise ValueError("distribution has zero-support states")
        warnings.warn(
            f"distribution has {pi.K - pi.support_size} zero-support states",
            RuntimeWarning,
            stacklevel=3,
        )


def build_iid(pi: Distribution, allow_zero_support: bool = True) -> RowClassChain:
    """Chain with every row equal to ``pi`` (so X_i are iid draws)."""
    _check_distribution(pi, allow_zero_support)
    return RowClassChain(pi.K, [pi], np.zeros(pi.K, dtype=np.int64))


def build_sticky(K: int, eta: float) -> RowClassChain:
    """Chain that stays in place w.p. 1-eta and otherwise moves uniformly.

    Full rank for K >= 3, so only the oracle and simulation paths accept it.
    """
    if K < 2:
        raise ValueError("sticky chain needs K >= 2")
    if not 0 < eta < 1:
        raise ValueError("eta must be in (0,1)")
    off = eta / (K - 1)
    classes = []
    for i in range(K):
        blocks = []
        if i > 0:
            blocks.append((0, i, off))
        blocks.append((i, 1, 1.0 - eta))
        if i < K - 1:
            blocks.append((i + 1, K - i - 1, off))
        classes.append(Distribution(K, tuple(blocks)))
    return RowClassChain(K, classes, np.arange(K, dtype=np.int64))


def _check_even(name, value):
    if value % 2:
        raise ValueError(f"{name} must be even, got {value}")


def build_p1(K: int, K1: int) -> RowClassChain:
    """Two half-overlapping uniform row blocks; states outside the middle
    K1 band are reachable from only one half."""
    _check_even("K", K)
    _check_even("K1", K1)
    if not 0 < K1 <= K:
        raise ValueError("need 0 < K1 <= K")
    a = 2.0 / (K + K1)
    top = Distribution(K, ((0, (K + K1) // 2, a),))
    bottom = Distribution(K, (((K - K1) // 2, (K + K1) // 2, a),))
    assignment = np.repeat([0, 1], K // 2)
    if K1 == K:
        return RowClassChain(K, [top], np.zeros(K, dtype=np.int64))
    return RowClassChain(K, [top, bottom], assignment)


def build_p2(K: int, K1: int) -> RowClassChain:
    """Four alternating row blocks supported on opposite halves."""
    _check_even("K", K)
    _check_even("K1", K1)
    if not 0 < K1 <= K:
        raise ValueError("need 0 < K1 <= K")
    first = Distribution(K, ((0, K // 2, 2.0 / K),))
    second = Distribution(K, ((K // 2, K // 2, 2.0 / K),))
    outer = (K - K1) // 2
    inner = K1 // 2
    assignment = np.repeat([0, 1, 0, 1], [outer, inner, inner, outer])
    if outer == 0:
        assignment = np.repeat([1, 0], [inner, inner])
    return RowClassChain(K, [first, second], assignment)


def build_p3(K: int, K1: int) -> RowClassChain:
    """Half-uniform outer rows with K1 full-support uniform middle rows."""
    _check_even("K", K)
    _check_even("K1", K1)
    if not 0 < K1 <= K:
        raise ValueError("need 0 < K1 <= K")
    first = Distribution(K, ((0, K // 2, 2.0 / K),))
    middle = Distribution.uniform(K)
    second = Distribution(K, ((K // 2, K // 2, 2.0 / K),))
    outer = (K - K1) // 2
    if outer == 0:
        return RowClassChain(K, [middle], np.zeros(K, dtype=np.int64))
    assignment = np.repeat([0, 1, 2], [outer, K1, outer])
    return RowClassChain(K, [first, middle, second], assignment)


def build_periodic_kronecker(n_states: int, r: int) -> RowClassChain:
    """Right-shift-by-1 permutation of r blocks, uniform within the next
    block. Rank r; period r; uniform stationary distribution."""
    if r < 1 or n_states % r:
        raise ValueError("r must divide n_states")
    size = n_states // r
    classes = [
        Distribution(n_states, ((((b + 1) % r) * size, size, 1.0 / size),))
        for b in range(r)
    ]
    assignment = np.repeat(np.arange(r, dtype=np.int64), size)
    return RowClassChain(n_states, classes, assignment)


def build_reducible_two_block(K: int) -> RowClassChain:
    """Two closed halves, uniform within each; lambda2 = 1, beta = 0."""
    _check_even("K", K)
    half = K // 2
    first = Distribution(K, ((0, half, 1.0 / half),))
    second = Distribution(K, ((half, half, 1.0 / half),))
    return RowClassChain(K, [first, second], np.repeat([0, 1], half))


def even_k1(n: int, kappa: float) -> int:
    """Nearest even integer to n**kappa, clamped to [2, n].

    Ties between two even neighbours go to the larger one (round-half-even
    applied to n**kappa / 2).
    """
    k1 = 2 * round(n**kappa / 2.0)
    return max(2, min(n, k1))


FAMILY_NAMES = ("iid", "sticky", "p1", "p2", "p3", "periodic", "reducible")


def build_family(
    name: str,
    K: int,
    K1: int | None = None,
    r: int | None = None,
    eta: float | None = None,
    pi: Distribution | None = None,
) -> RowClassChain:
    """Dispatch to a chain builder by family name.

    p1/p2/p3 need ``K1``; periodic needs ``r``; sticky needs ``eta``;
    iid takes an optional ``pi`` (uniform by default).
    """
    name = name.lower()
    if name == "iid":
        return build_iid(pi if pi is not None else Distribution.uniform(K))
    if name == "sticky":
        if eta is None:
            raise ValueError("sticky family needs eta")
        return build_sticky(K, eta)
    if name in ("p1", "p2", "p3"):
        if K1 is None:
            raise ValueError(f"{name} family needs K1")
        return {"p1": build_p1, "p2": build_p2, "p3": build_p3}[name](K, K1)
    if name == "periodic":
        if r is None:
            raise ValueError("periodic family needs r")
        return build_periodic_kronecker(K, r)
    if name == "reducible":
        return build_reducible_two_block(K)
    raise ValueError(f"unknown family {name!r}; expected one of {FAMILY_NAMES}")


def _class_masses(chain: RowClassChain) -> np.ndarray:
    """Stationary mass per row class, from the quotient system.

    Solved as a min-norm least-squares problem so reducible chains get the
    uniform mixture of their ergodic components (deterministic choice).
    """
    q = chain.quotient
    C = chain.n_classes
    A = np.vstack([q.T - np.eye(C), np.ones((1, C))])
    b = np.zeros(C + 1)
    b[-1] = 1.0
    masses, *_ = np.linalg.lstsq(A, b, rcond=None)
    return masses


def _stationary_unique(chain: RowClassChain) -> bool:
    q = chain.quotient
    C = chain.n_classes
    if C == 1:
        return True
    sv = np.linalg.svd(q.T - np.eye(C), compute_uv=False)
    return sv[-2] > 1e-10


def stationary_distribution(chain: RowClassChain, allow_reducible: bool = False) -> Distribution:
    """Distribution pi with pi P = pi, computed on the row-class quotient.

    Raises ``ReducibleError`` when pi is not unique, unless
    ``allow_reducible`` selects the uniform mixture of components.
    """
    if not _stationary_unique(chain):
        if not allow_reducible:
            raise ReducibleError("no unique stationary distribution")
    masses = _class_masses(chain)
    bands = chain.bands
    pi_bands = masses @ bands.class_mass
    pi_bands[np.abs(pi_bands) < 1e-15] = 0.0
    pi_bands = np.maximum(pi_bands, 0.0)
    pi_bands /= np.sum(pi_bands * bands.sizes)
    residual = _invariance_residual(chain, pi_bands)
    if residual > 1e-10:
        raise ValueError(f"stationary solve residual {residual:.2e} > 1e-10")
    blocks = [
        (int(s), int(l), float(m))
        for s, l, m in zip(bands.starts, bands.sizes, pi_bands)
        if m > 0.0
    ]
    return Distribution(chain.K, _merge_adjacent(blocks))


def _merge_adjacent(blocks):
    merged = []
    for start, length, mass in blocks:
        if merged and merged[-1][0] + merged[-1][1] == start and merged[-1][2] == mass:
            prev = merged.pop()
            merged.append((prev[0], prev[1] + length, mass))
        else:
            merged.append((start, length, mass))
    return tuple(merged)


def _invariance_residual(chain: RowClassChain, pi_bands: np.ndarray) -> float:
    """l1 norm of pi P - pi, evaluated band-wise."""
    bands = chain.bands
    class_total = np.zeros(chain.n_classes)
    np.add.at(class_total, bands.owner, pi_bands * bands.sizes)
    pi_next = class_total @ bands.class_mass
    return float(np.sum(np.abs(pi_next - pi_bands) * bands.sizes))


def pi_bands_of(chain: RowClassChain, pi: Distribution) -> np.ndarray:
    """Per-state stationary mass on each band of the chain."""
    return np.array([pi.mass_at(int(s)) for s in chain.bands.starts])


@dataclass(frozen=True)
class Rank2Decomposition:
    """P = 1 pi' + eta v u' with eta = lambda2 (diagonalizable) or 1
    (non-diagonalizable, where lambda2 = 0 and u.v = 0).

    Carries both per-state vectors and the band-level reduction used by
    the exact-bias machinery.
    """

    pi: Distribution
    u: np.ndarray
    v: np.ndarray
    lambda2: float
    diagonalizable: bool
    bands: Bands
    pi_bands: np.ndarray
    v_bands: np.ndarray
    u_bands: np.ndarray

    @property
    def eta(self) -> float:
        """Coefficient on v u' in the reconstruction."""
        return self.lambda2 if self.diagonalizable else 1.0

    @property
    def beta(self) -> float:
        gap = 1.0 if not self.diagonalizable else 1.0 - self.lambda2
        return min(2.0, max(0.0, gap))

    @property
    def is_iid(self) -> bool:
        return not np.any(self.v_bands)

    def per_state(self, x: int):
        """(pi_x, v_x, u_x) for one state."""
        b = int(np.searchsorted(self.bands.starts, x, side="right")) - 1
        return float(self.pi_bands[b]), float(self.v_class_of_band(b)), float(self.u_bands[b])

    def v_class_of_band(self, b: int) -> float:
        return self.v_bands[b]


def rank2_decompose(chain: RowClassChain, rank_classes_limit: int = 1024) -> Rank2Decomposition:
    """Spectral decomposition of a rank-2 chain.

    lambda2 is taken as trace(P) - 1 (exact for rank-2 stochastic matrices,
    whose spectrum is 1, lambda2, 0, ..., 0). v is constant on row classes
    and u on bands, so everything is computed on the small quotient and
    lifted. v is recovered as the column space of the centered quotient
    Phat - 1 m' (rank 1 for every rank-2 chain, including the repeated
    eigenvalue 1 of reducible chains and the nilpotent lambda2 = 0 case).
    """
    bands = chain.bands
    C = chain.n_classes
    if C > rank_classes_limit:
        raise RankTooHighError(f"rank test limited to {rank_classes_limit} row classes")
    if C >= 3:
        scaled = bands.class_mass * np.sqrt(bands.sizes)
        sv = np.linalg.svd(scaled, compute_uv=False)
        if sv[2] >= RANK_TOL * sv[0]:
            raise RankTooHighError(
                f"third singular value {sv[2]:.2e} >= {RANK_TOL:.0e} * {sv[0]:.2e}"
            )
    lambda2 = chain.trace - 1.0
    lambda2 = min(1.0, max(-1.0, lambda2))
    if abs(lambda2) < 1e-12:
        lambda2 = 0.0
    pi = stationary_distribution(chain, allow_reducible=True)
    pi_bands = pi_bands_of(chain, pi)

    centered_rows = bands.class_mass - pi_bands
    if np.max(np.abs(centered_rows)) <= NONDIAG_LAMBDA_TOL:
        zeros = np.zeros(chain.K)
        zb = np.zeros(bands.count)
        return Rank2Decomposition(
            pi, zeros, zeros.copy(), 0.0, True, bands, pi_bands, zb, zb.copy()
        )

    # centered_rows[c, b] = eta * v_c * u_b is rank 1 for every rank-2
    # chain; its column space gives v even where the class quotient loses u
    # (classes whose u entries sum to zero).
    left, sv, _ = np.linalg.svd(centered_rows)
    if len(sv) >= 2 and sv[1] > 1e-9 * sv[0]:
        raise DecompositionError(
            f"centered rows are not rank 1 (sigma2/sigma1 = {sv[1] / sv[0]:.2e})"
        )
    v_class = left[:, 0]
    diagonalizable = abs(lambda2) >= NONDIAG_LAMBDA_TOL
    eta = lambda2 if diagonalizable else 1.0

    # u is read off a single class row, which makes the reconstruction
    # P = pi + eta v u' exact by construction; subsequent rescalings always
    # touch v and u jointly (c*v, u/c) so it stays exact.
    c_star = int(np.argmax(np.abs(v_class)))
    u_bands = (bands.class_mass[c_star] - pi_bands) / (eta * v_class[c_star])
    v_bands = v_class[bands.owner]

    if diagonalizable:
        dot = float(np.sum(bands.sizes * u_bands * v_bands))
        if abs(dot) < 1e-12:
            raise DecompositionError("u.v vanished in the diagonalizable case")
        v_class, u_bands = v_class * dot, u_bands / dot

    scale = np.max(np.abs(v_class))
    v_class, u_bands = v_class / scale, u_bands * scale
    v_bands = v_class[bands.owner]
    first = np.nonzero(np.abs(v_bands) > 1e-9)[0]
    if len(first) and v_bands[first[0]] < 0:
        v_class, u_bands = -v_class, -u_bands

    v_class = _snap(v_class)
    v_bands = v_class[bands.owner]
    u_bands = _snap(u_bands)
    if diagonalizable:
        dot = float(np.sum(bands.sizes * u_bands * v_bands))
        u_bands = u_bands / dot

    decomp = Rank2Decomposition(
        pi,
        np.repeat(u_bands, bands.sizes),
        np.repeat(v_bands, bands.sizes),
        lambda2 if diagonalizable else 0.0,
        diagonalizable,
        bands,
        pi_bands,
        v_bands,
        u_bands,
    )
    _validate_decomposition(decomp, bands, v_class)
    return decomp


def _class_band_mass(chain: RowClassChain, pi_bands: np.ndarray) -> np.ndarray:
    """Total stationary mass inside the states of each class... expressed
    per quotient column: sum over bands owned by each class."""
    bands = chain.bands
    out = np.zeros(chain.n_classes)
    np.add.at(out, bands.owner, pi_bands * bands.sizes)
    return out


def _snap(values: np.ndarray) -> np.ndarray:
    """Zero out entries that are numerically noise relative to the largest,
    restoring exact zeros of symmetric constructions."""
    out = values.copy()
    scale = np.max(np.abs(out))
    if scale > 0:
        out[np.abs(out) < SNAP_TOL * scale] = 0.0
    return out


def _validate_decomposition(decomp: Rank2Decomposition, bands: Bands, v_class: np.ndarray):
    sizes = bands.sizes
    pi_v = float(np.sum(sizes * decomp.pi_bands * decomp.v_bands))
    u_one = float(np.sum(sizes * decomp.u_bands))
    u_v = float(np.sum(sizes * decomp.u_bands * decomp.v_bands))
    checks = [("pi.v", pi_v), ("u.1", u_one)]
    if decomp.diagonalizable:
        checks.append(("u.v - 1", u_v - 1.0))
    else:
        checks.append(("u.v", u_v))
    for name, value in checks:
        if abs(value) > 1e-9:
            raise DecompositionError(f"{name} = {value:.2e} exceeds 1e-9")
    recon = decomp.pi_bands[None, :] + decomp.eta * np.outer(v_class, decomp.u_bands)
    err = np.max(np.abs(recon - bands.class_mass))
    if err > 1e-9:
        raise DecompositionError(f"reconstruction residual {err:.2e} exceeds 1e-9")
    if recon.min() < -1e-9 or recon.max() > 1 + 1e-9:
        raise DecompositionError("reconstructed entries leave [0,1] by more than 1e-9")
