import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from frankcop import copula, data, gof
from frankcop.gof import CoverageError, CriticalCell, CriticalValueTable
from refdata import FITS, SIZES


def brute_w(x, y):
    n = len(x)
    return np.array([sum(x[k] <= x[j] and y[k] <= y[j] for k in range(n)) / n
                     for j in range(n)])


def direct_sn(ps, theta):
    # n * int_0^1 (K_n - K)^2 dK, piece by piece between the jumps of K_n
    n = ps.n
    total = 0.0
    for j in range(n):
        c = ps.kn_grid()[j]
        lo, hi = j / n, min((j + 1) / n, 1.0)
        f = lambda t: (c - (copula.k_cdf(t, theta) if t > 0 else 0.0)) ** 2 * (
            copula.k_density(t, theta) if t > 0 else 0.0)
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return n * total


def direct_tn(ps, theta, start):
    # dense grid plus the left limit at every jump of K_n
    n = ps.n
    counts = np.sort(ps.counts)
    t = np.linspace(start, 1.0, 20001)
    t = t[t > 0]
    kn = np.searchsorted(counts, np.floor(t * n), side="right") / n
    gaps = [np.abs(kn - copula.k_cdf(t, theta))]
    j = np.arange(0, n)
    right = (j + 1) / n
    keep = right > start
    left_kn = np.searchsorted(counts, j, side="right") / n
    gaps.append(np.abs(left_kn - copula.k_cdf(right, theta))[keep])
    at = j / n
    keep = (at >= start) & (at > 0)
    gaps.append(np.abs(left_kn - copula.k_cdf(np.where(keep, at, 1.0), theta))[keep])
    if start == 0.0:
        gaps.append(np.array([0.0]))
    return np.sqrt(n) * np.concatenate(gaps).max()


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 11))
    theta = float(rng.uniform(-15, 15))
    raw = rng.normal(size=(n, 2))
    return gof.pseudo_observations(raw), theta


# --- pseudo-observations ------------------------------------------------------

def test_w_hand_cases():
    assert gof.pseudo_observations([[1, 1], [2, 2]]).w.tolist() == [0.5, 1.0]
    ps = gof.pseudo_observations([[1, 2], [2, 1]])
    assert ps.w.tolist() == [0.5, 0.5]
    assert gof.empirical_k(ps, 0.5) == 1.0


@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), min_size=2, max_size=25))
def test_w_counts_brute_force(rows):
    arr = np.array(rows, dtype=float)
    ps = gof.pseudo_observations(arr)
    np.testing.assert_allclose(ps.w, brute_w(arr[:, 0], arr[:, 1]), atol=1e-15)
    assert np.all(ps.w >= 1 / ps.n) and np.all(ps.w <= 1)
    assert np.all((ps.pairs > 0) & (ps.pairs < 1))


@given(st.lists(st.tuples(st.integers(-30, 30), st.integers(-30, 30)), min_size=2, max_size=25))
def test_pseudo_observations_monotone_invariance(rows):
    arr = np.array(rows, dtype=float) / 10
    a = gof.pseudo_observations(arr)
    b = gof.pseudo_observations(np.column_stack([np.exp(arr[:, 0]), arr[:, 1]]))
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.pairs, b.pairs)


def test_empirical_k_edges():
    ps = gof.pseudo_observations(np.random.default_rng(0).normal(size=(7, 2)))
    assert gof.empirical_k(ps, 1.0) == 1.0
    assert gof.empirical_k(ps, 0.99 / 7) == 0.0
    grid = np.arange(8) / 7
    np.testing.assert_allclose(gof.empirical_k(ps, grid), ps.kn_grid(), atol=1e-15)


def test_pseudo_observations_need_two():
    with pytest.raises(ValueError):
        gof.pseudo_observations([[1.0, 2.0]])


# --- statistics -------------------------------------------------------------------

def test_sn_simplified_matches_integral():
    for seed in range(50):
        ps, theta = random_instance(seed)
        assert gof.sn_statistic(ps, theta) == pytest.approx(direct_sn(ps, theta), abs=1e-6)


def test_tn_simplified_matches_supremum():
    for seed in range(50):
        ps, theta = random_instance(seed)
        n = ps.n
        assert gof.tn_statistic(ps, theta) == pytest.approx(
            direct_tn(ps, theta, 1 / n), abs=1e-6)
        assert gof.tn_statistic(ps, theta, include_origin=True) == pytest.approx(
            direct_tn(ps, theta, 0.0), abs=1e-6)


@given(st.integers(0, 10_000), st.floats(-20, 20))
@settings(max_examples=40, deadline=None)
def test_statistics_bounds(seed, theta):
    ps = gof.pseudo_observations(np.random.default_rng(seed).normal(size=(12, 2)))
    assert gof.sn_statistic(ps, theta) >= -1e-12
    assert 0 <= gof.tn_statistic(ps, theta) <= np.sqrt(ps.n)


@pytest.mark.parametrize("key", sorted(FITS))
def test_bundled_statistics(key):
    theta, sn, tn = FITS[key]
    st_ = gof.statistics(data.load_bundled(*key))
    assert st_.theta_hat == pytest.approx(theta, abs=0.01)
    assert st_.sn == pytest.approx(sn, abs=0.005)
    assert st_.tn == pytest.approx(tn, abs=0.005)


def test_theta_use_policy():
    assert gof.theta_use_policy(-7.017) == (7.017, True)
    assert gof.theta_use_policy(0.9) == (0.9, False)
    assert gof.theta_use_policy(-1.2) == (1.2, False)
    assert gof.theta_use_policy(-2.5)[1]


# --- critical values --------------------------------------------------------------

def test_type1_quantile():
    vals = np.arange(1, 101, dtype=float)[::-1]
    assert gof.type1_quantile(vals, 0.95) == 95.0
    assert gof.type1_quantile(vals, 0.90) == 90.0
    assert gof.type1_quantile(np.arange(1.0, 11.0), 0.95) == 10.0


def test_simulation_deterministic_and_thread_invariant():
    a = gof.simulate_statistics(20, 3.0, 150, seed=5, threads=1)
    b = gof.simulate_statistics(20, 3.0, 150, seed=5, threads=2)
    c = gof.simulate_statistics(20, 3.0, 150, seed=6, threads=1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_simulated_levels_ordered():
    cells = gof.simulate_critical_values(25, 2.0, (0.90, 0.95), reps=400, seed=2)
    lo, hi = cells
    assert hi.sn >= lo.sn and hi.tn >= lo.tn


def test_simulation_validation():
    with pytest.raises(ValueError):
        gof.simulate_critical_values(20, 1.0, reps=50)
    with pytest.raises(ValueError):
        gof.simulate_statistics(20, 1.0, 100, 0, margins="other")


@pytest.mark.slow
def test_critical_value_example_n25():
    cell = gof.simulate_critical_values(25, 0.10, (0.90,), reps=4000, seed=0)[0]
    assert cell.sn == pytest.approx(0.272, abs=0.01)


def _quantile_se(sims, level, batches=10):
    qs = [gof.type1_quantile(b, level) for b in np.array_split(sims, batches)]
    return np.std(qs, ddof=1) / np.sqrt(batches)


@pytest.mark.slow
def test_critical_values_decrease_in_theta():
    thetas = [-5.0, -1.0, 1.0, 5.0, 10.0]
    q, se = [], []
    for th in thetas:
        sims = gof.simulate_statistics(50, th, 2000, seed=3)
        q.append([gof.type1_quantile(sims[:, k], 0.90) for k in (0, 1)])
        se.append([_quantile_se(sims[:, k], 0.90) for k in (0, 1)])
    q, se = np.array(q), np.array(se)
    for k in (0, 1):
        for i in range(len(thetas) - 1):
            assert q[i + 1, k] <= q[i, k] + 2 * np.hypot(se[i, k], se[i + 1, k])


@pytest.mark.slow
def test_critical_values_asymmetric():
    pos = gof.simulate_statistics(100, 10.0, 2000, seed=4)[:, 0]
    neg = gof.simulate_statistics(100, -10.0, 2000, seed=4)[:, 0]
    gap = gof.type1_quantile(neg, 0.90) - gof.type1_quantile(pos, 0.90)
    assert gap > 4 * np.hypot(_quantile_se(pos, 0.90), _quantile_se(neg, 0.90))


# --- table lookup ------------------------------------------------------------------

def small_table():
    cells = []
    for n in (20, 40):
        for th, base in ((1.0, 0.3), (3.0, 0.2)):
            shift = 0.0 if n == 20 else -0.1
            cells.append(CriticalCell(0.95, n, th, base + shift, 1.0 + base + shift, 1000, 0))
    return CriticalValueTable(cells)


def test_lookup_exact_and_bilinear():
    t = small_table()
    assert t.lookup("sn", 20, 3.0, 0.95) == pytest.approx(0.2)
    assert t.lookup("sn", 30, 2.0, 0.95) == pytest.approx(0.2)
    assert t.lookup("tn", 25, 1.0, 0.95) == pytest.approx(1.3 - 0.025)


@given(st.integers(20, 40), st.floats(1.0, 3.0))
def test_lookup_within_neighbours(n, theta):
    t = small_table()
    v = t.lookup("sn", n, theta, 0.95)
    assert 0.1 - 1e-12 <= v <= 0.3 + 1e-12


@pytest.mark.parametrize("n, theta", [(10, 2.0), (50, 2.0), (30, 0.5), (30, 3.5)])
def test_lookup_refuses_extrapolation(n, theta):
    with pytest.raises(CoverageError):
        small_table().lookup("sn", n, theta, 0.95)


def test_lookup_unknown_level_and_stat():
    with pytest.raises(CoverageError):
        small_table().lookup("sn", 20, 2.0, 0.99)
    with pytest.raises(ValueError):
        small_table().lookup("xx", 20, 2.0, 0.95)


def test_bundled_table_examples():
    t = CriticalValueTable.bundled()
    assert t.lookup("sn", 50, 5.0, 0.90) == pytest.approx(0.117)
    assert t.lookup("sn", 100, 4.161, 0.95) == pytest.approx(0.133, abs=0.005)
    assert {c.n for c in t.cells} >= {23, 44, 25, 1000}


def test_bundled_table_levels_ordered():
    t = CriticalValueTable.bundled()
    hi = {(c.n, c.theta): c for c in t.cells if c.level == 0.95}
    for c in t.cells:
        if c.level == 0.90:
            h = hi[(c.n, c.theta)]
            assert h.sn >= c.sn and h.tn >= c.tn


def test_table_roundtrip(tmp_path):
    t = small_table()
    p = tmp_path / "t.csv"
    t.to_csv(p)
    back = CriticalValueTable.from_csv(p)
    key = lambda c: (c.n, c.theta)
    for a, b in zip(sorted(back.cells, key=key), sorted(t.cells, key=key)):
        assert (a.level, a.n, a.theta, a.reps, a.seed) == (b.level, b.n, b.theta, b.reps, b.seed)
        assert a.sn == pytest.approx(b.sn, abs=1e-12) and a.tn == pytest.approx(b.tn, abs=1e-12)


# --- bootstrap ------------------------------------------------------------------------

def test_bootstrap_deterministic_thread_invariant():
    s = data.load_bundled("north", "As", "pH")
    a = gof.bootstrap_pvalues(s, 150, seed=3, threads=1)
    b = gof.bootstrap_pvalues(s, 150, seed=3, threads=2)
    assert a == b
    assert 0 <= a.p_sn <= 1 and (a.p_sn * 150) == pytest.approx(round(a.p_sn * 150))
    assert gof.bootstrap_pvalue(s, "tn", 150, seed=3) == a.p_tn


def test_bootstrap_redraws_degenerate_resamples():
    raw = np.array([[1.0, 1.0], [2.0, 3.0], [3.0, 2.0], [1.0, 1.0]])
    res = gof.bootstrap_pvalues(raw, 200, seed=0)
    assert res.redraws > 0


def test_bootstrap_validation():
    with pytest.raises(ValueError):
        gof.bootstrap_pvalues(np.random.default_rng(0).normal(size=(10, 2)), 10)


@pytest.mark.slow
def test_bootstrap_pvalues_roughly_uniform_under_null():
    rejections = 0
    for k in range(200):
        raw = copula.sample(50, 3.0, 10_000 + k)
        res = gof.bootstrap_pvalues(raw, 500, seed=k)
        rejections += res.p_sn < 0.05
    assert abs(rejections / 200 - 0.05) <= 0.04


# --- full report -------------------------------------------------------------------------

def test_gof_report_north_as_ph():
    rep = gof.gof_test(data.load_bundled("north", "As", "pH"))
    assert rep.n == SIZES["north"]
    assert rep.theta_use == pytest.approx(abs(rep.theta_hat))
    assert not rep.reoriented
    assert not rep.policy.rejected[0.95]["sn"] and not rep.policy.rejected[0.95]["tn"]
    assert rep.critical_sn == rep.policy.critical[0.95]["sn"]
    assert rep.p_boot_sn is None


def test_gof_report_reorients_strong_negative():
    s = data.load_bundled("south", "As", "Eh")
    rep = gof.gof_test(s)
    assert rep.reoriented and rep.theta_use == pytest.approx(7.017, abs=0.01)
    flipped = gof.statistics(np.column_stack([s.x, -s.y]))
    assert rep.policy.sn == flipped.sn and rep.policy.theta_table == flipped.theta_hat
    assert rep.signed.theta_table == rep.theta_hat


def test_gof_report_bootstrap_fields():
    rep = gof.gof_test(data.load_bundled("north", "As", "Cl"), bootstrap=100, seed=1)
    assert rep.bootstrap_b == 100 and 0 <= rep.p_boot_tn <= 1


def test_gof_coverage_error_for_uncovered_n():
    raw = copula.sample(12, 1.0, 0)
    with pytest.raises(CoverageError):
        gof.gof_test(raw)


def test_load_table_default_and_file(tmp_path):
    assert gof.load_table(None).cells
    buf = io.StringIO()
    small_table().write(buf)
    p = tmp_path / "x.csv"
    p.write_text(buf.getvalue())
    assert len(gof.load_table(p).cells) == 4
