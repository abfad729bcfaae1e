"""Spectral parameters of a rank-2 chain.

Computes the three quantities every bias bound is expressed in:

* ``spectral_gap``: beta = 1 - lambda2, in [0, 2].
* ``max_tv_gap``: theta, the largest total-variation distance between any
  two rows of the transition matrix.
* ``weighted_norm_lambda_pi`` / ``weighted_norm_numeric``: lambda_pi, the
  operator norm of P - 1 pi' on L2(pi), via a rank-2 closed form and an
  independent power-iteration oracle.

``dominant_term_fit`` fits log-log slopes of beta, 1-theta and 1-lambda_pi
against n for the K = n, K1 ~ n^kappa family sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import (
    Distribution,
    Rank2Decomposition,
    RowClassChain,
    rank2_decompose,
)

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SpectralParams:
    beta: float
    theta: float
    lambda_pi: float

    @property
    def theta_bar(self) -> float:
        return 1.0 - self.theta

    @property
    def lambda_pi_bar(self) -> float:
        return 1.0 - self.lambda_pi


def spectral_gap(decomp: Rank2Decomposition) -> float:
    """beta = 1 - lambda2, snapped at the 1e-12 level and clamped to [0,2]."""
    gap = 1.0 - decomp.lambda2
    for target in (0.0, 1.0, 2.0):
        if abs(gap - target) < ZERO_TOL:
            gap = target
    return min(2.0, max(0.0, gap))


def max_tv_gap(chain: RowClassChain) -> float:
    """Largest TV distance between two distinct row classes (0 if one class)."""
    bands = chain.bands
    C = chain.n_classes
    best = 0.0
    for c1 in range(C):
        for c2 in range(c1 + 1, C):
            tv = 0.5 * float(
                np.sum(bands.sizes * np.abs(bands.class_mass[c1] - bands.class_mass[c2]))
            )
            best = max(best, tv)
    return min(1.0, best)


def weighted_norm_lambda_pi(decomp: Rank2Decomposition) -> float:
    """Closed form of the L2(pi) norm of P - 1 pi'.

    P - 1 pi' = eta v u' is rank 1, so the norm factorizes into
    |eta| * ||v||_pi * ||u||_{1/pi}. States with pi_x = 0 are excluded from
    the weighted space; they make the norm undefined if u_x != 0 there.
    """
    if decomp.is_iid:
        return 0.0
    bands = decomp.bands
    pi_b = decomp.pi_bands
    zero_mass = pi_b == 0.0
    if np.any(zero_mass & (decomp.u_bands != 0.0)):
        raise ValueError("lambda_pi undefined: zero-mass state with nonzero u")
    live = ~zero_mass
    s_v = float(np.sum(bands.sizes[live] * pi_b[live] * decomp.v_bands[live] ** 2))
    s_u = float(np.sum(bands.sizes[live] * decomp.u_bands[live] ** 2 / pi_b[live]))
    return abs(decomp.eta) * np.sqrt(s_v) * np.sqrt(s_u)


def weighted_norm_numeric(
    chain: RowClassChain,
    pi: Distribution,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> float:
    """Power-iteration oracle for lambda_pi.

    Iterates the self-adjoint operator T = A* A on L2(pi), where
    A = P - 1 pi', and returns sqrt of its top eigenvalue, i.e. the norm
    sup {||A z||_pi : ||z||_pi = 1}. Relative tolerance ``tol``, at most
    ``max_iter`` iterations.
    """
    bands = chain.bands
    pi_b = np.array([pi.mass_at(int(s)) for s in bands.starts])
    if np.any(pi_b <= 0.0):
        raise ValueError("numeric lambda_pi needs strictly positive pi")
    pi_states = np.repeat(pi_b, bands.sizes)
    edges = np.concatenate([bands.starts, [chain.K]]).astype(np.int64)
    assignment = chain.assignment

    def apply_A(z):
        # (P z)_i depends only on class(i); subtracting pi.z centers it
        band_sums = np.add.reduceat(z, edges[:-1])
        class_vals = bands.class_mass @ band_sums - float(np.dot(pi_states, z))
        return class_vals[assignment]

    def apply_A_star(w):
        pw = pi_states * w
        band_sums = np.add.reduceat(pw, edges[:-1])
        class_sums = np.zeros(chain.n_classes)
        np.add.at(class_sums, bands.owner, band_sums)
        coeff_b = (class_sums @ bands.class_mass) / pi_b - float(np.sum(band_sums))
        return np.repeat(coeff_b, bands.sizes)

    z = np.linspace(1.0, 2.0, chain.K)
    z /= np.sqrt(np.dot(pi_states, z * z))
    sigma_prev = 0.0
    for _ in range(max_iter):
        az = apply_A(z)
        sigma = float(np.sqrt(np.dot(pi_states, az * az)))
        if sigma == 0.0:
            return 0.0
        if abs(sigma - sigma_prev) <= tol * max(1.0, sigma):
            return sigma
        z_next = apply_A_star(az)
        norm = np.sqrt(np.dot(pi_states, z_next * z_next))
        if norm == 0.0:
            return sigma
        z = z_next / norm
        sigma_prev = sigma
    raise RuntimeError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last gap {abs(sigma - sigma_prev):.2e})"
    )


def compute_params(chain: RowClassChain, decomp: Rank2Decomposition | None = None) -> SpectralParams:
    """All three parameters of a rank-2 chain."""
    if decomp is None:
        decomp = rank2_decompose(chain)
    return SpectralParams(
        beta=spectral_gap(decomp),
        theta=max_tv_gap(chain),
        lambda_pi=weighted_norm_lambda_pi(decomp),
    )


@dataclass(frozen=True)
class ExponentFit:
    quantity: str
    status: str  # "fit" or "zero"
    slope: float | None
    r2: float | None
    values: tuple[float, ...]


def dominant_term_fit(family: str, kappa: float, n_grid) -> dict[str, ExponentFit]:
    """Log-log slopes of beta, theta_bar, lambda_pi_bar vs n with K = n,
    K1 ~ n^kappa.

    Quantities that vanish identically across the grid (within 1e-12) are
    reported with status "zero" instead of a slope.
    """
    from .chains import build_family, even_k1
    from .simulate import rate_fit

    n_grid = list(n_grid)
    rows = {"beta": [], "theta_bar": [], "lambda_pi_bar": []}
    for n in n_grid:
        chain = build_family(family, K=n, K1=even_k1(n, kappa))
        p = compute_params(chain)
        rows["beta"].append(p.beta)
        rows["theta_bar"].append(p.theta_bar)
        rows["lambda_pi_bar"].append(p.lambda_pi_bar)
    out = {}
    for quantity, values in rows.items():
        if max(abs(v) for v in values) <= ZERO_TOL:
            out[quantity] = ExponentFit(quantity, "zero", None, None, tuple(values))
        else:
            slope, _, r2 = rate_fit(list(zip(n_grid, values)))
            out[quantity] = ExponentFit(quantity, "fit", slope, r2, tuple(values))
    return out
