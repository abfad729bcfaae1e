import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtmarkov import (
    Distribution,
    ReducibleError,
    build_iid,
    build_p1,
    build_p2,
    build_p3,
    build_periodic_kronecker,
    build_reducible_two_block,
    brute_force_bias,
    exact_bias,
    exact_bias_periodic,
    gamma_x,
    occupancy_tail,
    per_state_spectral,
    prob_no_visit_given_not_x,
    prob_no_visit_given_x,
    rank2_decompose,
    srd_matrix,
    srd_power,
    stationary_distribution,
    transfer_matrix_tail,
)
from gtmarkov.exact_bias import TwoByTwo, _cell_of

CHAINS = {
    "iid": build_iid(Distribution.uniform(4)),
    "p1": build_p1(4, 2),
    "p2": build_p2(4, 2),
    "p3": build_p3(4, 2),
    "periodic": build_periodic_kronecker(4, 2),
}


def _path_no_visit(chain, x, n, m, conditioned_on_x):
    """Enumerate all length-n paths: Pr(no visit to x outside sample m | X_m)."""
    P = chain.dense()
    pi = stationary_distribution(chain).probs
    K = chain.K
    num = 0.0
    den = 0.0
    for path in itertools.product(range(K), repeat=n):
        at_x = path[m - 1] == x
        if at_x != conditioned_on_x:
            continue
        p = pi[path[0]]
        for a, b in zip(path, path[1:]):
            p *= P[a, b]
        den += p
        if all(s != x for i, s in enumerate(path) if i != m - 1):
            num += p
    return num / den


@pytest.mark.parametrize("name", sorted(CHAINS))
def test_no_visit_probabilities_match_path_enumeration(name):
    chain = CHAINS[name]
    d = rank2_decompose(chain)
    n = 5
    for x in (0, 2):
        want_not = _path_no_visit(chain, x, n, 2, conditioned_on_x=False)
        assert prob_no_visit_given_not_x(d, x, n) == pytest.approx(want_not, abs=1e-12)
        for m in (1, 3, 5):
            want = _path_no_visit(chain, x, n, m, conditioned_on_x=True)
            assert prob_no_visit_given_x(d, x, n, m) == pytest.approx(want, abs=1e-12)


def test_no_visit_is_position_independent_given_not_x():
    chain = CHAINS["p1"]
    vals = {
        m: _path_no_visit(chain, 0, 5, m, conditioned_on_x=False) for m in (1, 3, 5)
    }
    assert max(vals.values()) - min(vals.values()) < 1e-14


@pytest.mark.parametrize("name", sorted(CHAINS))
@pytest.mark.parametrize("n", (3, 5, 7))
def test_exact_bias_matches_exhaustive_enumeration(name, n):
    chain = CHAINS[name]
    d = rank2_decompose(chain)
    assert exact_bias(d, n).exact_bias == pytest.approx(
        brute_force_bias(chain, n), abs=1e-12
    )


def test_bias_report_cells_sum_to_total():
    d = rank2_decompose(build_p3(8, 2))
    report = exact_bias(d, 12)
    total = sum(c.size * c.contribution for c in report.cells)
    assert report.exact_bias == pytest.approx(total, abs=1e-15)
    rows = report.per_state
    assert len(rows) == 8
    assert {r[0] for r in rows} == set(range(8))


@pytest.mark.parametrize("name", sorted(CHAINS))
def test_occupancy_tail_matches_transfer_oracle(name):
    chain = CHAINS[name]
    d = rank2_decompose(chain)
    for x in (0, 3):
        for n in (2, 9, 40):
            mine = occupancy_tail(d, x, n)
            oracle = transfer_matrix_tail(chain, x, n)
            assert mine.p0 == pytest.approx(oracle.p0, abs=1e-12)
            assert mine.p1 == pytest.approx(oracle.p1, abs=1e-12)
            assert 0.0 <= mine.p0 <= 1.0
            assert 0.0 <= mine.p1 <= 1.0


@pytest.mark.parametrize("name", sorted(CHAINS))
def test_gamma_equals_averaged_no_visit_difference(name):
    chain = CHAINS[name]
    d = rank2_decompose(chain)
    n = 9
    for x in range(chain.K):
        avg = sum(prob_no_visit_given_x(d, x, n, m) for m in range(1, n + 1)) / n
        want = avg - prob_no_visit_given_not_x(d, x, n)
        assert gamma_x(d, x, n) == pytest.approx(want, abs=1e-11)


def test_zero_coupling_states_have_exactly_zero_gamma():
    # middle-band states of p3 carry the full-support row: v_x u_x = 0
    d = rank2_decompose(build_p3(8, 2))
    zero_states = [
        x for x in range(8) if per_state_spectral(d, x).w_x == 0.0
    ]
    assert zero_states
    for x in zero_states:
        for n in (3, 17, 200):
            assert gamma_x(d, x, n) == 0.0


def test_periodic_closed_form_values():
    assert exact_bias_periodic(6, 2) == pytest.approx((1 / 3) * (2 / 3) ** 2, abs=1e-15)
    assert exact_bias_periodic(8, 8) == 1.0
    assert exact_bias_periodic(64, 2) == pytest.approx(
        (2 / 64) * (1 - 2 / 64) ** 31, abs=1e-15
    )


def test_periodic_closed_form_matches_decomposition_path():
    for n in (4, 8, 16):
        d = rank2_decompose(build_periodic_kronecker(n, 2))
        assert exact_bias(d, n).exact_bias == pytest.approx(
            exact_bias_periodic(n, 2), abs=1e-12
        )


def test_transfer_power_is_multiplicative():
    m = srd_matrix(rank2_decompose(build_p1(4, 2)), 0)
    for a in range(5):
        for b in range(5):
            left = srd_power(m, a + b)
            right = srd_power(m, a) @ srd_power(m, b)
            for f in ("a11", "a12", "a21", "a22"):
                assert getattr(left, f) == pytest.approx(getattr(right, f), abs=1e-14)


def test_transfer_power_matches_numpy():
    d = rank2_decompose(build_p2(4, 2))
    m = srd_matrix(d, 0)
    dense = np.array([[m.a11, m.a12], [m.a21, m.a22]])
    p = srd_power(m, 9)
    np.testing.assert_allclose(
        np.array([[p.a11, p.a12], [p.a21, p.a22]]),
        np.linalg.matrix_power(dense, 9),
        atol=1e-14,
    )


def test_uncoupled_state_transfer_power_is_triangular():
    # v_x = 0 makes the transfer matrix lower triangular with
    # eigenvalues 1 - pi_x and eta, so its powers have a closed form
    d = rank2_decompose(build_p3(8, 2))
    x = next(x for x in range(8) if per_state_spectral(d, x).v_x == 0.0)
    s = per_state_spectral(d, x)
    m = srd_matrix(d, x)
    a, b, c = 1.0 - s.pi_x, d.eta, m.a21
    for ell in (1, 2, 7, 19):
        p = srd_power(m, ell)
        assert p.a11 == pytest.approx(a**ell, abs=1e-14)
        assert p.a12 == pytest.approx(0.0, abs=1e-15)
        assert p.a21 == pytest.approx(c * (a**ell - b**ell) / (a - b), abs=1e-13)
        assert p.a22 == pytest.approx(b**ell, abs=1e-14)


def test_closed_form_gate_agrees_with_matrix_path():
    for name in ("p1", "p3"):
        d = rank2_decompose(CHAINS[name])
        for x in range(4):
            cell = _cell_of(d, x)
            if not cell.use_closed:
                continue
            n = 11
            by_power = cell._bilinear(cell.row_q, srd_power(cell.m, n - 2))
            assert cell.q_not(n) == pytest.approx(by_power, abs=1e-13)


def test_degenerate_transfer_pairs_avoid_closed_form():
    # p2 builds states whose transfer eigenvalues coincide; anchored
    # closed-form weights would blow up there
    d = rank2_decompose(build_p2(4, 2))
    flags = [_cell_of(d, x).use_closed for x in range(4)]
    assert not all(flags)
    assert exact_bias(d, 8).exact_bias == pytest.approx(
        brute_force_bias(CHAINS["p2"], 8), abs=1e-12
    )


def test_error_paths():
    d = rank2_decompose(build_p1(4, 2))
    with pytest.raises(ValueError):
        exact_bias(d, 2)
    with pytest.raises(ValueError):
        occupancy_tail(d, 0, 1)
    with pytest.raises(ValueError):
        prob_no_visit_given_x(d, 0, 5, 6)
    with pytest.raises(ValueError):
        srd_power(TwoByTwo.identity(), -1)
    with pytest.raises(ReducibleError):
        exact_bias(rank2_decompose(build_reducible_two_block(4)), 5)
    with pytest.raises(ValueError):
        brute_force_bias(build_p1(64, 32), 8)  # 64**8 >> enumeration guard


def test_large_state_space_runs_fast():
    # per-band evaluation: K = 8192 costs the same as K = 8
    d = rank2_decompose(build_p1(8192, 128))
    report = exact_bias(d, 8192)
    assert math.isfinite(report.exact_bias)
    assert len(report.cells) <= 8


@given(
    st.sampled_from(["p1", "p3"]),
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=4, max_value=30),
)
@settings(max_examples=25, deadline=None)
def test_tail_probabilities_are_probabilities(name, half, n):
    K = 2 * half
    chain = build_p1(K, 2) if name == "p1" else build_p3(K, 2)
    d = rank2_decompose(chain)
    t = occupancy_tail(d, 0, n)
    assert 0.0 <= t.p0 <= 1.0
    assert 0.0 <= t.p1 <= 1.0
    assert t.p0 + t.p1 <= 1.0 + 1e-12
