import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtmarkov import (
    BoundConstants,
    Distribution,
    InapplicableError,
    ReducibleError,
    bound_rate_table,
    build_iid,
    build_p1,
    build_p2,
    build_p3,
    build_reducible_two_block,
    compute_params,
    corollary1_bound,
    corollary2_bound,
    exact_bias,
    kontorovich_tail,
    naor_tail,
    occupancy_tail,
    partition_states,
    rank2_decompose,
    theorem1_bound,
)


def _prepare(chain):
    d = rank2_decompose(chain)
    return d, compute_params(chain, d)


def test_kontorovich_tail_formula_and_clip():
    assert kontorovich_tail(0.1, 100, 0.5, 0.3) == pytest.approx(
        2.0 * math.exp(-0.5 * 100 * 0.25 * 0.09), rel=1e-15
    )
    assert kontorovich_tail(0.1, 2, 0.5, 0.01) == 1.0
    with pytest.raises(InapplicableError):
        kontorovich_tail(0.1, 100, 1.0, 0.3)
    with pytest.raises(ValueError):
        kontorovich_tail(0.1, 100, 0.5, 0.0)


def test_naor_tail_formula_and_clip():
    assert naor_tail(0.1, 100, 0.5, 0.2, q=4.0, C=2.0) == pytest.approx(0.8, rel=1e-12)
    # default moment order is 3 ln n
    q = 3.0 * math.log(100)
    want = (q / (0.5 * 100)) ** (q / 2.0) * 0.1 * 0.2**-q
    assert naor_tail(0.1, 100, 0.5, 0.2) == pytest.approx(min(1.0, want), rel=1e-12)
    assert naor_tail(0.5, 3, 0.99, 0.01) == 1.0
    with pytest.raises(InapplicableError):
        naor_tail(0.1, 100, 1.0, 0.2)
    with pytest.raises(ValueError):
        naor_tail(0.1, 100, 0.5, -1.0)
    with pytest.raises(ValueError):
        naor_tail(0.1, 100, 0.5, 0.2, q=1.0)


@pytest.mark.parametrize("K,K1", ((8, 2), (8, 4), (16, 2)))
def test_contraction_tail_dominates_exact_occupancy(K, K1):
    d, p = _prepare(build_p1(K, K1))
    pi_x = 1.0 / K
    for n in (16, 64, 256):
        if pi_x <= 1.0 / n:
            continue
        t = occupancy_tail(d, 0, n)
        assert t.p0 + t.p1 <= kontorovich_tail(pi_x, n, p.theta, pi_x - 1.0 / n) + 1e-15


def test_partition_states_invariants():
    d = rank2_decompose(build_p3(8, 2))
    beta = 2 / 8
    part = partition_states(d, beta / 5.0)
    assert set(part.low_bands).isdisjoint(part.high_bands)
    # the middle band of p3 has v_x = 0 and belongs to neither side
    w = d.v_bands * d.u_bands
    active = [b for b in range(len(w)) if w[b] != 0.0]
    assert sorted(part.low_bands + part.high_bands) == active
    sizes = d.bands.sizes
    assert part.low_count == sum(sizes[b] for b in part.low_bands)
    assert part.high_count == sum(sizes[b] for b in part.high_bands)
    with pytest.raises(ValueError):
        partition_states(d, 0.0)


def test_partition_of_iid_has_no_active_states():
    part = partition_states(rank2_decompose(build_iid(Distribution.uniform(4))), 0.1)
    assert part.low_count == 0 and part.high_count == 0


def test_partition_threshold_moves_states_low():
    d = rank2_decompose(build_p1(8, 2))
    small = partition_states(d, 0.01)
    large = partition_states(d, 0.5)
    assert small.low_count <= large.low_count
    assert small.high_count >= large.high_count
    assert small.low_count + small.high_count == large.low_count + large.high_count


def test_theorem1_monotone_in_delta():
    d, p = _prepare(build_p1(8, 2))
    n = 64
    deltas = np.linspace(1.0 / n + 1e-6, p.beta / 5.0, 10)
    reports = [theorem1_bound(d, p, n, dl) for dl in deltas]
    low = [r.low_mass_term for r in reports]
    tail = [r.tail_term for r in reports]
    assert all(a < b for a, b in zip(low, low[1:]))
    assert all(a >= b for a, b in zip(tail, tail[1:]))
    assert all(r.residual_term == 1.0 / n for r in reports)
    assert all(
        r.total == r.low_mass_term + r.tail_term + r.residual_term for r in reports
    )


def test_theorem1_rejects_out_of_range_delta():
    d, p = _prepare(build_p1(8, 2))
    with pytest.raises(ValueError):
        theorem1_bound(d, p, 64, 1.0 / 64)
    with pytest.raises(ValueError):
        theorem1_bound(d, p, 64, p.beta / 5.0 + 1e-9)
    with pytest.raises(ReducibleError):
        dd, pp = _prepare(build_reducible_two_block(4))
        theorem1_bound(dd, pp, 64, 0.05)


def test_theorem1_custom_tail_is_used():
    d, p = _prepare(build_p1(8, 2))
    r = theorem1_bound(d, p, 64, 0.05, tail=lambda x, m: 1.0)
    assert r.tail_term == 2.0


@pytest.mark.parametrize(
    "chain,n",
    (
        (build_p1(8, 4), 64),
        (build_p1(16, 8), 256),
        (build_p3(8, 2), 128),
        (build_iid(Distribution.uniform(8)), 64),
    ),
)
def test_theorem1_dominates_exact_bias_on_delta_sweep(chain, n):
    d, p = _prepare(chain)
    exact = abs(exact_bias(d, n).exact_bias)
    for dl in np.linspace(1.0 / n * 1.001, p.beta / 5.0, 10):
        assert theorem1_bound(d, p, n, dl).total >= exact


def test_corollary1_applicability():
    d, p = _prepare(build_p2(4, 2))
    r = corollary1_bound(d, p, 1024)
    assert not r.applicable
    assert "no contraction" in r.reason
    assert math.isnan(r.total)
    with pytest.raises(InapplicableError):
        corollary1_bound(d, p, 1024, strict=True)

    d, p = _prepare(build_p1(256, 16))
    r = corollary1_bound(d, p, 256)
    assert not r.applicable
    assert "below required" in r.reason
    assert math.isfinite(r.total)  # reported even when not certified

    d, p = _prepare(build_p1(8, 4))
    consts = BoundConstants(c_exponent=0.49)
    for n in (256, 4096):
        r = corollary1_bound(d, p, n, consts)
        assert r.applicable
        assert r.total >= abs(exact_bias(d, n).exact_bias)


def test_corollary2_applicability():
    d, p = _prepare(build_p2(4, 2))
    r = corollary2_bound(d, p, 1024)
    assert not r.applicable
    assert "weighted norm" in r.reason
    with pytest.raises(InapplicableError):
        corollary2_bound(d, p, 1024, strict=True)

    d, p = _prepare(build_iid(Distribution.uniform(8)))
    r = corollary2_bound(d, p, 4096)
    assert r.applicable
    assert r.total >= abs(exact_bias(d, 4096).exact_bias)


def test_corollary_totals_shrink_with_n():
    d, p = _prepare(build_p1(8, 4))
    consts = BoundConstants(c_exponent=0.49)
    totals = [corollary1_bound(d, p, n, consts).total for n in (256, 1024, 4096)]
    assert totals[0] > totals[1] > totals[2]


def test_bound_constants_validation():
    with pytest.raises(ValueError):
        BoundConstants(c1=0.0)
    with pytest.raises(ValueError):
        BoundConstants(c2=-1.0)
    with pytest.raises(ValueError):
        BoundConstants(c_exponent=0.5)
    with pytest.raises(ValueError):
        BoundConstants(c_exponent=0.0)
    with pytest.raises(ValueError):
        BoundConstants(q=1.5)
    assert BoundConstants().q_at(100) == pytest.approx(3.0 * math.log(100))
    assert BoundConstants(q=4.0).q_at(100) == 4.0


def test_rate_table_slopes_none_when_inapplicable():
    consts = BoundConstants(c_exponent=0.49)
    t = bound_rate_table("p1", 0.5, (256, 512, 1024), consts)
    assert t.bound1_slope is None
    assert t.bound2_slope is None
    assert t.exact_slope is not None

    t = bound_rate_table("p1", 1.0, (256, 512, 1024, 2048), consts)
    assert t.bound1_slope is not None and t.bound1_slope < 0.0
    assert t.exact_slope == pytest.approx(-1.0, abs=0.05)
    assert [r.n for r in t.rows] == [256, 512, 1024, 2048]
    assert all(r.bound1.applicable for r in t.rows)


@given(
    st.floats(min_value=0.01, max_value=0.99),
    st.integers(min_value=8, max_value=5000),
    st.floats(min_value=0.0, max_value=0.99),
    st.floats(min_value=1e-4, max_value=1.0),
)
@settings(max_examples=80, deadline=None)
def test_tail_bounds_are_probability_clamped(pi_x, n, rho, eps):
    kt = kontorovich_tail(pi_x, n, rho, eps)
    nt = naor_tail(pi_x, n, rho, eps)
    assert 0.0 <= kt <= 1.0
    assert 0.0 <= nt <= 1.0
