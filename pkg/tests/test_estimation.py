"""Tests for exponent/direction estimation and the heavy-tail machinery.

Oracles: diagonal and rotation families have exact exponents; the
triangular family's expanding line has the explicit series cotangent
1/(1 - 1/e) for constant entries; the lag-discounted supremum has a
closed-form tail law; LAPACK and brute-force sums pin everything else.
"""

import math

import numpy as np
import pytest

from oseledets import cocycle, estimation as est, gl2, scalars
from oseledets.cocycle import WindowExhausted
from oseledets.estimation import (
    NeedMoreSamples,
    NoData,
    NonNegativeDrift,
    SeriesDiverging,
    angle_tail_report,
    angle_tail_report_neglog,
    build_counterexample_cocycle,
    counterexample_psi,
    estimate_E1_backward,
    estimate_E2_forward,
    exact_sup_tail,
    lag_discounted_sup,
    lyapunov_estimates,
    negative_drift_supremum,
    oseledets_angle_samples,
    pool_mean_se,
    sample_sup_values,
    suggested_depth,
    triangular_gap_neglog_samples,
    triangular_series,
    weierstrass_bounds,
)
from oseledets.scalars import BadTerm, Unsupported

X_CONST = 1.0 / (1.0 - math.exp(-1))  # series value for a = 1/e, b = 1


def constant_window(mat, half_width, seed=0):
    nu = cocycle.atoms_distribution([(mat, 1.0)])
    return cocycle.sample_onestep(nu, half_width, seed=seed)


# ---------------------------------------------------------------------------
# exponents


def test_lyapunov_diagonal_exact():
    w = constant_window(gl2.mat2(2, 0, 0, 0.5), 1500)
    lam = lyapunov_estimates(w)
    assert lam.top == pytest.approx(math.log(2.0), abs=1e-12)
    assert lam.bottom == pytest.approx(-math.log(2.0), abs=1e-12)


def test_lyapunov_rotation_zero():
    w = constant_window(gl2.rotation(0.7), 1500)
    lam = lyapunov_estimates(w)
    assert lam.top == pytest.approx(0.0, abs=1e-9)
    assert lam.bottom == pytest.approx(0.0, abs=1e-9)


def test_lyapunov_triangular_constant_b():
    nu = cocycle.triangular_distribution(
        scalars.constant(math.exp(-1)), scalars.constant(1.0)
    )
    w = cocycle.sample_onestep(nu, 100_000, seed=0)
    lam = lyapunov_estimates(w)
    assert lam.top == pytest.approx(0.0, abs=0.05)
    assert lam.bottom == pytest.approx(-1.0, abs=0.05)


def test_lyapunov_ordering_and_warning():
    rng = np.random.default_rng(0)
    mats = rng.uniform(-2, 2, size=(600, 2, 2))
    mats = mats[np.abs(gl2.det2(mats)) > 1e-2]
    w = cocycle.OrbitWindow(offset=0, matrices=mats)
    with pytest.warns(UserWarning):
        lam = lyapunov_estimates(w)
    assert lam.top >= lam.bottom
    with pytest.raises(WindowExhausted):
        lyapunov_estimates(cocycle.OrbitWindow(offset=-4, matrices=mats[:4]))


# ---------------------------------------------------------------------------
# splitting directions


def test_directions_diagonal_exact():
    w = constant_window(gl2.mat2(2, 0, 0, 0.5), 80)
    assert estimate_E2_forward(w, 60) == pytest.approx(math.pi / 2, abs=1e-12)
    assert estimate_E1_backward(w, 60) == pytest.approx(0.0, abs=1e-12)


def test_directions_triangular_constant():
    nu = cocycle.triangular_distribution(
        scalars.constant(math.exp(-1)), scalars.constant(1.0)
    )
    w = cocycle.sample_onestep(nu, 60, seed=0)
    assert gl2.line_angle(estimate_E2_forward(w, 60), 0.0) < 1e-6
    e1 = estimate_E1_backward(w, 60)
    assert gl2.line_angle(e1, math.atan2(1.0, X_CONST)) < 1e-6


def test_directions_triangular_zero_b():
    nu = cocycle.triangular_distribution(
        scalars.constant(math.exp(-1)), scalars.constant(0.0)
    )
    w = cocycle.sample_onestep(nu, 60, seed=0)
    assert gl2.line_angle(estimate_E1_backward(w, 60), math.pi / 2) < 1e-12


def test_backward_direction_matches_series_on_random_b():
    nu = cocycle.triangular_distribution(
        scalars.constant(math.exp(-1)), scalars.uniform(0.5, 1.5)
    )
    for seed in range(10):
        w = cocycle.sample_onestep(nu, 60, seed=seed)
        a_vals = [w.matrix_at(-j - 1)[0, 0] for j in range(60)]
        b_vals = [w.matrix_at(-j - 1)[0, 1] for j in range(60)]
        x = triangular_series(a_vals, b_vals, tol=1e-9)
        d = gl2.line_angle(estimate_E1_backward(w, 60), math.atan2(1.0, x))
        assert d < 1e-5


def test_direction_estimates_contract_with_depth():
    nu = cocycle.rotgain_distribution(scalars.uniform(0, 2 * math.pi), scalars.constant(1.0))
    w = cocycle.sample_onestep(nu, 60, seed=3)
    assert gl2.line_angle(estimate_E2_forward(w, 30), estimate_E2_forward(w, 60)) < 1e-9
    assert gl2.line_angle(estimate_E1_backward(w, 30), estimate_E1_backward(w, 60)) < 1e-9


def test_suggested_depth():
    assert suggested_depth(2.0) >= math.log(1e8) / 2.0
    d = suggested_depth(0.5, target=1e-6)
    assert math.exp(-0.5 * d) < 1e-6
    with pytest.raises(ValueError):
        suggested_depth(0.0)


# ---------------------------------------------------------------------------
# the invariant series


def test_series_zero_b():
    assert triangular_series([0.5] * 10, [0.0] * 10, tol=1e-9) == 0.0


def test_series_finite_support():
    a = [0.5] * 40
    b = [2.0, 4.0] + [0.0] * 38
    assert triangular_series(a, b, tol=1e-9) == 4.0


def test_series_geometric():
    n = 60
    x = triangular_series([math.exp(-1)] * n, [1.0] * n, tol=1e-9)
    assert x == pytest.approx(X_CONST, abs=2e-9)
    assert x == pytest.approx(1.581977, abs=1e-6)


def test_series_diverging():
    with pytest.raises(SeriesDiverging):
        triangular_series([1.1] * 2000, [1.0] * 2000, tol=1e-9)


def test_series_needs_more_samples():
    with pytest.raises(NeedMoreSamples) as exc:
        triangular_series([math.exp(-1)] * 5, [1.0] * 5, tol=1e-9)
    need = exc.value.required
    assert 20 <= need <= 40
    assert triangular_series(
        [math.exp(-1)] * need, [1.0] * need, tol=1e-9
    ) == pytest.approx(X_CONST, abs=2e-9)


# ---------------------------------------------------------------------------
# angle samples


def test_angle_samples_diagonal():
    nu = cocycle.atoms_distribution([(gl2.mat2(2, 0, 0, 0.5), 1.0)])
    th = oseledets_angle_samples(nu, trials=50, depth=20, seed=0)
    np.testing.assert_allclose(th, math.pi / 2, atol=1e-12)


def test_angle_samples_deterministic_and_in_range():
    nu = cocycle.rotgain_distribution(scalars.uniform(0, 2 * math.pi), scalars.constant(1.0))
    a = oseledets_angle_samples(nu, trials=300, depth=15, seed=9)
    b = oseledets_angle_samples(nu, trials=300, depth=15, seed=9)
    np.testing.assert_array_equal(a, b)
    assert np.all(a > 0) and np.all(a <= math.pi / 2 + 1e-12)


def test_neglog_sampler_constant_family():
    nu = cocycle.triangular_distribution(
        scalars.constant(math.exp(-1)), scalars.constant(1.0)
    )
    v = triangular_gap_neglog_samples(nu, trials=64, depth=512, seed=1)
    want = 0.5 * math.log(1.0 + X_CONST**2)
    np.testing.assert_allclose(v, want, atol=1e-10)


def test_neglog_sampler_agrees_with_matrix_path():
    nu = cocycle.triangular_distribution(
        scalars.constant(math.exp(-1)), scalars.uniform(0.5, 1.5)
    )
    v1 = triangular_gap_neglog_samples(nu, trials=4000, depth=200, seed=3)
    ang = oseledets_angle_samples(nu, trials=4000, depth=60, seed=4)
    v2 = -np.log(np.sin(ang))
    se = math.hypot(v1.std(ddof=1), v2.std(ddof=1)) / math.sqrt(4000)
    assert abs(v1.mean() - v2.mean()) < 4 * se


def test_neglog_sampler_rejects_signed_entries():
    nu = cocycle.triangular_distribution(
        scalars.uniform(-0.5, 0.5), scalars.constant(1.0)
    )
    with pytest.raises(Unsupported):
        triangular_gap_neglog_samples(nu, trials=100, depth=16, seed=0)
    with pytest.raises(Unsupported):
        triangular_gap_neglog_samples(
            cocycle.rotgain_distribution(scalars.constant(0.0), scalars.constant(1.0)),
            trials=10,
            depth=4,
        )


# ---------------------------------------------------------------------------
# tail reports


def test_report_right_angles_all_zero():
    rep = angle_tail_report([math.pi / 2] * 20, [1.0, 2.0])
    assert rep.truncated_means == (0.0, 0.0)
    assert rep.verdict == "converging"
    assert rep.sample_count == 20


def test_report_constant_angle():
    rep = angle_tail_report([math.pi / 6] * 50, [0.5, 1.0, 2.0])
    assert rep.truncated_means[0] == pytest.approx(0.5)
    assert rep.truncated_means[1] == pytest.approx(math.log(2.0))
    assert rep.truncated_means[2] == pytest.approx(math.log(2.0))
    assert rep.verdict == "converging"


def test_report_invariants_on_random_samples():
    rng = np.random.default_rng(1)
    th = rng.uniform(1e-6, math.pi / 2, size=4000)
    ms = [0.5, 1.0, 3.0, 9.0]
    rep = angle_tail_report(th, ms)
    assert all(b >= a for a, b in zip(rep.truncated_means, rep.truncated_means[1:]))
    assert all(v <= m for v, m in zip(rep.truncated_means, ms))


def test_report_infinite_neglog_grows():
    rep = angle_tail_report_neglog([np.inf] * 40, [4.0, 64.0])
    assert rep.truncated_means == (4.0, 64.0)
    assert rep.verdict == "growing"


def test_report_errors():
    with pytest.raises(NoData):
        angle_tail_report([], [1.0, 2.0])
    with pytest.raises(BadTerm):
        angle_tail_report([0.1], [2.0, 1.0])
    with pytest.raises(BadTerm):
        angle_tail_report([2.0], [1.0, 2.0])  # angle beyond pi/2
    with pytest.raises(BadTerm):
        angle_tail_report_neglog([-0.1], [1.0, 2.0])


def test_report_serialization():
    rep = angle_tail_report([math.pi / 6] * 5, [1.0, 2.0])
    obj = rep.to_obj()
    assert obj["verdict"] == "converging"
    assert obj["sample_count"] == 5
    assert float(obj["truncated_means"][0]) == rep.truncated_means[0]
    csv = rep.to_csv()
    assert csv.splitlines()[0] == "threshold,truncated_mean,stderr"
    assert len(csv.splitlines()) == 3


def test_verdicts_counterexample_vs_control():
    vce = triangular_gap_neglog_samples(
        build_counterexample_cocycle(), trials=20_000, depth=512, seed=5
    )
    assert angle_tail_report_neglog(vce, [4.0, 64.0]).verdict == "growing"
    ctrl = cocycle.rotgain_distribution(scalars.uniform(0, 2 * math.pi), scalars.constant(1.0))
    ath = oseledets_angle_samples(ctrl, trials=20_000, depth=12, seed=6)
    assert angle_tail_report(ath, [4.0, 64.0]).verdict == "converging"


# ---------------------------------------------------------------------------
# product bounds and the lag-discounted supremum


def test_weierstrass_fixture():
    assert weierstrass_bounds([0.5, 0.5]) == (0.5, 0.75, 1.0)
    assert weierstrass_bounds([0.0, 0.0, 0.0]) == (0.0, 0.0, 0.0)
    assert weierstrass_bounds([]) == (0.0, 0.0, 0.0)
    lo, val, up = weierstrass_bounds([0.3, 1.0, 0.2])
    assert val == 1.0 and val <= min(up, 1.0) and lo <= val


def test_weierstrass_sandwich_random():
    rng = np.random.default_rng(4)
    for _ in range(300):
        a = rng.random(int(rng.integers(1, 40))) ** 2
        lo, val, up = weierstrass_bounds(a)
        assert lo <= val + 1e-12
        assert val <= min(up, 1.0) + 1e-12


def test_weierstrass_bad_terms():
    with pytest.raises(BadTerm):
        weierstrass_bounds([0.5, -0.1])
    with pytest.raises(BadTerm):
        weierstrass_bounds([1.2])


def test_sup_fixture():
    assert lag_discounted_sup([3.5, 0.0, 10.0], upper_bound=10.0) == 8.0
    assert lag_discounted_sup([0.0], upper_bound=0.0) == 0.0


def test_sup_needs_more_samples():
    with pytest.raises(NeedMoreSamples) as exc:
        lag_discounted_sup([1.0], upper_bound=10.0)
    assert exc.value.required == 10
    vals = [1.0] + [0.0] * 9
    assert lag_discounted_sup(vals, upper_bound=10.0) == 1.0


def test_sup_value_above_bound_rejected():
    with pytest.raises(BadTerm):
        lag_discounted_sup([11.0], upper_bound=10.0)


def test_sup_mc_matches_exact_oracle():
    psi = scalars.atoms([(0.0, 0.5), (2.0, 0.5)])
    tail = exact_sup_tail(psi)
    np.testing.assert_allclose(tail.b[:2], [0.75, 0.5])
    assert tail.expectation == 1.25
    assert not tail.infinite
    y = sample_sup_values(psi, trials=40_000, seed=7)
    se = y.std(ddof=1) / math.sqrt(y.size)
    assert y.mean() == pytest.approx(1.25, abs=3 * se)


def test_sup_truncated_means_match_oracle():
    # independent first-principles oracle: P(Y >= k) = 1 - prod_{j>=k} P(psi < j)
    pairs = [(0.0, 0.4), (1.0, 0.3), (3.0, 0.2), (7.0, 0.1)]
    psi = scalars.atoms(pairs)
    b_oracle = []
    for k in range(1, 8):
        prod = 1.0
        for j in range(k, 8):
            prod *= sum(w for v, w in pairs if v < j)
        b_oracle.append(1.0 - prod)
    tail = exact_sup_tail(psi)
    np.testing.assert_allclose(tail.b[:7], b_oracle, atol=1e-14)
    assert tail.expectation == pytest.approx(sum(b_oracle), abs=1e-14)
    y = sample_sup_values(psi, trials=60_000, seed=8)
    for m in (1.0, 2.0, 4.0, 8.0):
        exact = sum(min(bk, 1.0) for bk in tail.b[: int(m)])
        clipped = np.minimum(y, m)
        se = clipped.std(ddof=1) / math.sqrt(y.size)
        assert clipped.mean() == pytest.approx(exact, abs=3 * se)


def test_sup_tail_degenerate_zero():
    tail = exact_sup_tail(scalars.constant(0.0))
    assert tail.expectation == 0.0
    assert np.all(tail.b == 0.0)
    assert np.all(sample_sup_values(scalars.constant(0.0), trials=100, seed=0) == 0.0)


def test_sup_tail_noninteger_atoms():
    assert exact_sup_tail(scalars.constant(1.5)).expectation == pytest.approx(1.5)
    # hand-computed layer cake: P(Y>t) = 1 on [0,.5), 1 on [.25..), .75, .5
    psi = scalars.atoms([(0.5, 0.5), (2.25, 0.5)])
    assert exact_sup_tail(psi).expectation == pytest.approx(1.5625, abs=1e-12)


def test_sup_tail_dyadic_blockwise():
    tail = exact_sup_tail(counterexample_psi(), max_terms=8)
    assert tail.infinite and tail.expectation == math.inf
    assert tail.b[0] == 1.0
    # independent vectorized oracle for b_2: a_j = 4^-ceil(log2 j)
    j = np.arange(2, 2**20)
    m = np.ceil(np.log2(j))
    log_prod = np.log1p(-(4.0**-m)).sum()
    tail_beyond = sum(2 ** (mm - 1) * math.log1p(-(4.0**-mm)) for mm in range(21, 60))
    b2 = -np.expm1(log_prod + tail_beyond)
    assert tail.b[1] == pytest.approx(b2, abs=1e-9)


def test_sup_tail_errors():
    with pytest.raises(Unsupported):
        exact_sup_tail(scalars.uniform(0, 1))
    with pytest.raises(BadTerm):
        exact_sup_tail(scalars.atoms([(-1.0, 0.5), (2.0, 0.5)]))
    with pytest.raises(BadTerm):
        sample_sup_values(scalars.atoms([(-1.0, 1.0)]), trials=10)


# ---------------------------------------------------------------------------
# the counterexample family


def test_counterexample_psi_is_dyadic():
    psi = counterexample_psi()
    assert psi.mean() == 1.5
    assert psi.second_moment() == math.inf


def test_build_counterexample():
    nu = build_counterexample_cocycle()
    assert nu.kind == "triangular" and nu.log_scale_b
    assert nu.a.atom_pairs() == [(math.exp(-1), 1.0)]
    with pytest.raises(BadTerm):
        build_counterexample_cocycle(scalars.atoms([(-0.5, 1.0)]))


def test_counterexample_neglog_floor():
    # X >= e^(psi_0) >= e, so -log sin >= 0.5 log(1 + e^2)
    v = triangular_gap_neglog_samples(build_counterexample_cocycle(), 2000, seed=11)
    assert v.min() >= 0.5 * math.log(1.0 + math.e**2) - 1e-12


# ---------------------------------------------------------------------------
# negative drift


def test_drift_constant_phi_sup_zero():
    rep = negative_drift_supremum(scalars.constant(3.0), horizon=200, trials=50, seed=0)
    assert rep.value == 0.0 and rep.stderr == 0.0
    assert rep.stabilized
    assert rep.drift_c == pytest.approx(1.0)


def test_drift_square_integrable_stabilizes():
    phi = scalars.atoms([(0.0, 0.5), (6.0, 0.5)])
    rep = negative_drift_supremum(phi, horizon=4000, trials=4000, seed=0)
    assert rep.stabilized
    assert rep.value > 0


def test_drift_infinite_variance_grows():
    phi = scalars.affine(scalars.dyadic(), scale=-1.0, shift=2.0)
    assert phi.mean() == 0.5 and phi.second_moment() == math.inf
    rep = negative_drift_supremum(phi, horizon=1000, trials=60_000, seed=0)
    assert not rep.stabilized
    assert rep.value > rep.half_value


def test_drift_misconfiguration():
    phi = scalars.constant(3.0)
    with pytest.raises(NonNegativeDrift):
        negative_drift_supremum(phi, drift_c=1.5, horizon=100, trials=10)
    with pytest.raises(NonNegativeDrift):
        negative_drift_supremum(phi, drift_c=2.0, horizon=100, trials=10)
    with pytest.raises(NonNegativeDrift):
        negative_drift_supremum(scalars.constant(-1.0), horizon=100, trials=10)


# ---------------------------------------------------------------------------
# pooling


def test_pool_mean_se_matches_flat_computation():
    rng = np.random.default_rng(2)
    batches = [rng.normal(size=n) for n in (50, 200, 125)]
    means = [b.mean() for b in batches]
    ses = [b.std(ddof=1) / math.sqrt(b.size) for b in batches]
    counts = [b.size for b in batches]
    mean, se, n = pool_mean_se(means, ses, counts)
    flat = np.concatenate(batches)
    assert n == flat.size
    assert mean == pytest.approx(flat.mean(), abs=1e-12)
    assert se == pytest.approx(flat.std(ddof=1) / math.sqrt(flat.size), abs=1e-12)


def test_pool_mean_se_order_independent():
    mean1, se1, _ = pool_mean_se([1.0, 2.0], [0.1, 0.2], [100, 50])
    mean2, se2, _ = pool_mean_se([2.0, 1.0], [0.2, 0.1], [50, 100])
    assert mean1 == pytest.approx(mean2) and se1 == pytest.approx(se2)
