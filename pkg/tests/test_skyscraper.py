"""Tests for tower vectors and the renewal skyscraper dynamics.

Oracles: base-cell masses and label occupancies have closed forms
(mass/height; telescoping sums), so simulation statistics are checked
against exact values with batch-means error bars.
"""

import math

import numpy as np
import pytest
from scipy import stats

from oseledets import skyscraper as sky
from oseledets.skyscraper import (
    BadHeightForLabels,
    BadTowerVector,
    NeedStrictDecrease,
    SkyscraperState,
    TowerVector,
    bounded_tower_vector,
    kac_base_measures,
    label_measures,
    label_of,
    lowcost_heights,
    p_from_obj,
    p_to_obj,
    refine_weights,
    renewal_start_stationary,
    renewal_step,
    renewal_trajectory,
    trajectory_csv,
    trajectory_labels,
)

GEOM_P = 0.5 ** np.arange(1, 42)  # residual 2^-42 folds away


def batch_freq(flags, blocks=50):
    """Mean and batch-means stderr of a 0/1 trajectory statistic."""
    per = np.array([b.mean() for b in np.array_split(np.asarray(flags, float), blocks)])
    return per.mean(), per.std(ddof=1) / math.sqrt(blocks)


# ---------------------------------------------------------------------------
# tower vectors


def test_kac_fixture():
    assert kac_base_measures(TowerVector({1: 0.5, 2: 0.5})) == {1: 0.5, 2: 0.25}
    assert kac_base_measures(TowerVector({1: 1.0})) == {1: 1.0}
    got = kac_base_measures(TowerVector({2: 0.5, 3: 0.5}))
    assert got[2] == 0.25 and got[3] == pytest.approx(1 / 6, abs=1e-15)


def test_kac_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        ks = [1] + [int(k) for k in rng.choice(np.arange(2, 40), size=4, replace=False)]
        w = rng.random(5)
        pi = TowerVector(dict(zip(ks, w / w.sum())))
        total = math.fsum(k * m for k, m in kac_base_measures(pi).items())
        assert total == pytest.approx(1.0, abs=1e-12)


def test_tower_vector_validation():
    with pytest.raises(BadTowerVector):
        TowerVector({1: 0.5, 2: 0.4})  # mass 0.9
    with pytest.raises(BadTowerVector):
        TowerVector({2: 0.5, 4: 0.5})  # gcd 2
    with pytest.raises(BadTowerVector):
        TowerVector({1: 1.5, 2: -0.5})
    with pytest.raises(BadTowerVector):
        TowerVector({0: 1.0})
    with pytest.raises(BadTowerVector):
        TowerVector({})
    tv = TowerVector({1: 0.5, 3: 0.0, 2: 0.5})
    assert tv.support() == [1, 2]
    assert tv.mass(3) == 0.0
    assert tv.mean_height() == 1.5


def test_state_validation():
    with pytest.raises(BadTowerVector):
        SkyscraperState(3, 3)
    with pytest.raises(BadTowerVector):
        SkyscraperState(3, -1)


def test_tower_vector_json_roundtrip():
    tv = bounded_tower_vector(GEOM_P)
    again = TowerVector.from_obj(tv.to_obj())
    assert again.entries == tv.entries
    p = p_from_obj(p_to_obj(GEOM_P))
    np.testing.assert_array_equal(p, GEOM_P)


# ---------------------------------------------------------------------------
# renewal chain


def test_stationary_start_forced():
    for seed in range(20):
        st = renewal_start_stationary(TowerVector({1: 1.0}), seed=seed)
        assert st == SkyscraperState(1, 0)


def test_stationary_start_frequencies():
    pi = TowerVector({1: 0.5, 2: 0.5})
    rng = np.random.default_rng(5)
    draws = [renewal_start_stationary(pi, rng) for _ in range(20_000)]
    f21 = np.mean([d == SkyscraperState(2, 1) for d in draws])
    f_h2 = np.mean([d.height == 2 for d in draws])
    assert abs(f21 - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 20_000)
    assert abs(f_h2 - 0.5) < 3 * math.sqrt(0.25 / 20_000)


def test_step_climbs_and_recycles():
    pi = TowerVector({1: 0.5, 2: 0.5})
    rng = np.random.default_rng(0)
    assert renewal_step(SkyscraperState(6, 2), pi, rng) == SkyscraperState(6, 3)
    nxt = renewal_step(SkyscraperState(2, 1), pi, rng)
    assert nxt.level == 0 and nxt.height in (1, 2)
    one = TowerVector({1: 1.0})
    st = SkyscraperState(1, 0)
    for _ in range(10):
        st = renewal_step(st, one, rng)
        assert st == SkyscraperState(1, 0)


def test_step_preserves_stationary_law():
    pi = TowerVector({1: 0.5, 2: 0.5})
    rng = np.random.default_rng(2)
    counts = {(1, 0): 0, (2, 0): 0, (2, 1): 0}
    chains = 1200
    for c in range(chains):
        st = renewal_start_stationary(pi, seed=10_000 + c)
        for _ in range(100):
            st = renewal_step(st, pi, rng)
        counts[(st.height, st.level)] += 1
    observed = [counts[(1, 0)], counts[(2, 0)], counts[(2, 1)]]
    expected = [0.5 * chains, 0.25 * chains, 0.25 * chains]
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_trajectory_moves_are_legal():
    pi = bounded_tower_vector(GEOM_P[:20] / GEOM_P[:20].sum())
    h, l = renewal_trajectory(pi, 5000, seed=3)
    assert np.all((0 <= l) & (l < h))
    climb = (l[1:] == l[:-1] + 1) & (h[1:] == h[:-1])
    reset = (l[1:] == 0) & (l[:-1] == h[:-1] - 1)
    assert np.all(climb | reset)


def test_trajectory_deterministic():
    pi = TowerVector({1: 0.5, 2: 0.5})
    a = renewal_trajectory(pi, 1000, seed=4)
    b = renewal_trajectory(pi, 1000, seed=4)
    c = renewal_trajectory(pi, 1000, seed=5)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0]) or not np.array_equal(a[1], c[1])


def test_trajectory_occupancy_matches_kac():
    # every level of tower k carries mass(k)/k in the stationary law
    pi = TowerVector({1: 0.25, 4: 0.25, 6: 0.1875, 8: 0.3125})
    h, l = renewal_trajectory(pi, 200_000, seed=6)
    for k, i, want in ((1, 0, 0.25), (4, 2, 0.0625), (6, 5, 0.03125), (8, 0, 0.0390625)):
        mean, se = batch_freq((h == k) & (l == i))
        assert abs(mean - want) < 3 * max(se, 1e-4)


# ---------------------------------------------------------------------------
# labels


def test_label_fixtures():
    assert label_of(SkyscraperState(6, 2)) == 2
    assert label_of(SkyscraperState(4, 3)) == 0
    assert label_of(SkyscraperState(1, 0)) == 0
    assert [label_of(SkyscraperState(4, i)) for i in range(4)] == [0, 1, 1, 0]
    assert [label_of(SkyscraperState(6, i)) for i in range(6)] == [0, 1, 2, 2, 1, 0]


def test_label_height_domain():
    for bad in (2, 3, 5, 7):
        with pytest.raises(BadHeightForLabels):
            label_of(SkyscraperState(bad, 0))
    with pytest.raises(BadHeightForLabels):
        trajectory_labels([4, 3], [0, 0])


def test_labels_lipschitz_along_trajectory():
    pi = bounded_tower_vector(GEOM_P[:20] / GEOM_P[:20].sum())
    h, l = renewal_trajectory(pi, 100_000, seed=7)
    lab = trajectory_labels(h, l)
    assert np.all(np.abs(np.diff(lab)) <= 1)
    assert lab.min() == 0


def test_label_occupancy_matches_p():
    pi = bounded_tower_vector(GEOM_P)
    h, l = renewal_trajectory(pi, 200_000, seed=8)
    lab = trajectory_labels(h, l)
    for n in range(3):
        mean, se = batch_freq(lab == n)
        assert abs(mean - GEOM_P[n]) < 3 * max(se, 1e-4)


def test_trajectory_csv_format():
    h, l = renewal_trajectory(TowerVector({1: 1.0}), 3, seed=0)
    text = trajectory_csv(h, l)
    assert text.splitlines() == ["step,height,level,label", "0,1,0,0", "1,1,0,0", "2,1,0,0"]


# ---------------------------------------------------------------------------
# bounded-mode tower masses


def test_bounded_tower_vector_geometric_half():
    tv = bounded_tower_vector(GEOM_P)
    assert tv.mass(1) == pytest.approx(0.25, abs=1e-12)
    assert tv.mass(4) == pytest.approx(0.25, abs=1e-12)
    assert tv.mass(6) == pytest.approx(0.1875, abs=1e-12)
    assert tv.mass(8) == pytest.approx(0.125, abs=1e-12)
    assert tv.mass(2) == 0.0
    assert math.fsum(tv.entries.values()) == pytest.approx(1.0, abs=1e-12)


def test_bounded_tower_vector_geometric_third():
    p = (2 / 3) * (1 / 3) ** np.arange(0, 26)
    tv = bounded_tower_vector(p)
    assert tv.mass(1) == pytest.approx(4 / 9, abs=1e-12)
    assert tv.mass(4) == pytest.approx(8 / 27, abs=1e-12)


def test_bounded_tower_vector_rejects_bad_p():
    with pytest.raises(NeedStrictDecrease):
        bounded_tower_vector([0.5, 0.5])
    with pytest.raises(NeedStrictDecrease):
        bounded_tower_vector([0.9, -0.1, 0.2])
    with pytest.raises(NeedStrictDecrease):
        bounded_tower_vector([0.5, 0.25])  # mass 0.75
    with pytest.raises(NeedStrictDecrease):
        bounded_tower_vector([])


def test_label_measures_reproduce_p():
    lm = label_measures(GEOM_P)
    assert lm[0] == pytest.approx(0.5, abs=1e-12)
    for n in range(10):
        assert lm[n] == pytest.approx(GEOM_P[n], abs=1e-12)
    assert math.fsum(lm.values()) == pytest.approx(1.0, abs=1e-12)
    p = (2 / 3) * (1 / 3) ** np.arange(0, 26)
    lm2 = label_measures(p)
    for n in range(6):
        assert lm2[n] == pytest.approx(p[n], abs=1e-12)


# ---------------------------------------------------------------------------
# weight refinement and low-cost heights


def test_refine_identity_on_decreasing():
    v, o = refine_weights([0.6, 0.3, 0.1])
    np.testing.assert_array_equal(v, [0.6, 0.3, 0.1])
    np.testing.assert_array_equal(o, [0, 1, 2])


def test_refine_splits_ties():
    v, o = refine_weights([0.5, 0.5])
    assert np.all(np.diff(v) < 0)
    assert v.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(o, [0, 1, 1])
    np.testing.assert_allclose(v[o == 1].sum(), 0.5, atol=1e-12)


def test_refine_random_property():
    rng = np.random.default_rng(9)
    for _ in range(40):
        w = rng.random(int(rng.integers(1, 12)))
        w = w / w.sum()
        v, o = refine_weights(w)
        assert np.all(np.diff(v) < 0) and np.all(v > 0)
        assert math.fsum(v) == pytest.approx(1.0, abs=1e-12)
        for idx in range(w.size):
            assert math.fsum(v[o == idx]) == pytest.approx(w[idx], abs=1e-12)


def test_refine_rejects_bad_weights():
    with pytest.raises(ValueError):
        refine_weights([0.5, 0.0, 0.5])
    with pytest.raises(ValueError):
        refine_weights([0.5, 0.4])


def test_lowcost_heights_fixtures():
    assert lowcost_heights([1.0, 1.0, 1.0], 1.0) == [3, 4, 5]
    assert lowcost_heights([1.0, 2.0, 3.0], 1e9) == [1, 2, 3]
    assert lowcost_heights([1.0, 100.0], 1.0) == [3, 202]  # 201 shares factor 3
    assert lowcost_heights([0.0], 5.0) == [1]


def test_lowcost_heights_contract():
    rng = np.random.default_rng(10)
    for _ in range(40):
        c = np.sort(rng.random(int(rng.integers(2, 9))) * 10)
        eps = float(rng.uniform(0.05, 2.0))
        ks = lowcost_heights(c, eps)
        assert all(cn / kn < eps / 2 for cn, kn in zip(c, ks))
        assert all(b > a for a, b in zip(ks, ks[1:]))
        assert math.gcd(*ks) == 1


def test_lowcost_heights_errors():
    with pytest.raises(ValueError):
        lowcost_heights([3.0], 1.0)  # single piece cannot reach gcd 1
    with pytest.raises(ValueError):
        lowcost_heights([2.0, 1.0], 1.0)  # decreasing costs
    with pytest.raises(ValueError):
        lowcost_heights([1.0], 0.0)
    with pytest.raises(ValueError):
        lowcost_heights([], 1.0)
