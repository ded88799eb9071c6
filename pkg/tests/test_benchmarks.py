import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import qmc

from mfcabo import benchmarks as bm
from mfcabo.domain import ProblemSpace


def borehole_by_hand(rw, r, tu, hu, tl, hl, L, kw, a=1.0, b=1.0, c=1.0, d=2.0, e=1.0):
    """Scalar borehole family written out term by term."""
    num = 2 * np.pi * tu * (a * hu - b * hl)
    lr = np.log(r / rw)
    return num / (np.log(c * r / rw) * (1 + d * L * tu / (lr * rw ** 2 * kw) + e * tu / tl))


def wing_by_hand(sw, wfw, A, lam_deg, q, lam, tc, nz, wdg, wp, exp_sw=0.758, tail="sw"):
    c = np.cos(np.radians(lam_deg))
    core = 0.36 * sw ** exp_sw * wfw ** 0.0035 * (A / c ** 2) ** 0.6 * q ** 0.006 * lam ** 0.04 \
        * (100 * tc / c) ** (-0.3) * (nz * wdg) ** 0.49
    return core + {"sw": sw * wp, "wp": wp, "none": 0.0}[tail]


def test_double_well_golden():
    p = bm.get_problem("double_well")
    assert p.evaluate([0.0], 0) == 0.0
    assert p.evaluate([1.0], 0) == pytest.approx(0.6 - 0.3 - 3 + 2)
    assert p.evaluate([-1.0], 0) == pytest.approx(0.6 + 0.3 - 3 - 2)
    assert p.evaluate([2.0], 0) == pytest.approx(0.6 * 16 - 0.3 * 8 - 12 + 4)
    assert p.evaluate([1.0], 1) == pytest.approx(0.6 - 0.3 - 3 - 1.2)
    assert p.evaluate([-2.0], 1) == pytest.approx(9.6 + 2.4 - 12 + 2.4)
    assert p.evaluate([3.0], 1) == pytest.approx(48.6 - 8.1 - 27 - 3.6)


def test_rosenbrock_golden():
    p = bm.get_problem("rosenbrock")
    assert p.evaluate([1.0, 1.0], 0) == pytest.approx(-456.3)
    assert p.evaluate([0.0, 0.0], 0) == pytest.approx(1 - 456.3)
    assert p.evaluate([-1.0, 2.0], 0) == pytest.approx(4 + 100 - 456.3)
    assert p.evaluate([1.0, 1.0], 1) == pytest.approx(100.0)
    assert p.evaluate([0.0, -2.0], 1) == pytest.approx(101.0)
    assert p.evaluate([-2.0, 0.5], 1) == pytest.approx(109.0)


BOREHOLE_POINTS = [
    (0.1, 25000, 89335, 1050, 89.55, 760, 1400, 10950),
    (0.05, 100, 63070, 990, 63.1, 700, 1120, 9855),
    (0.15, 50000, 115600, 1110, 116, 820, 1680, 12045),
]
BOREHOLE_VARIANTS = [dict(), dict(b=0.8, d=1.0), dict(d=8.0, e=0.75),
                     dict(a=1.09, c=4.0, d=3.0), dict(a=1.05, c=2.0, d=3.0)]


@pytest.mark.parametrize("j", range(5))
def test_borehole_golden(j):
    p = bm.get_problem("borehole")
    for x in BOREHOLE_POINTS:
        assert p.evaluate(np.array(x, float), j) == pytest.approx(
            borehole_by_hand(*x, **BOREHOLE_VARIANTS[j]), rel=1e-12)


def test_borehole_nominal_value():
    # widely tabulated value at the centre-ish nominal point
    p = bm.get_problem("borehole")
    assert p.evaluate(np.array(BOREHOLE_POINTS[0], float), 0) == pytest.approx(
        2 * np.pi * 89335 * 290 / (np.log(250000) * (1 + 2 * 1400 * 89335 / (np.log(250000) * 0.01 * 10950)
                                                     + 89335 / 89.55)))


WING_POINTS = [
    (175, 260, 8, 0, 30, 0.75, 0.13, 4.25, 2100, 0.05),
    (150, 220, 6, -10, 16, 0.5, 0.08, 2.5, 1700, 0.025),
    (200, 300, 10, 10, 45, 1.0, 0.18, 6.0, 2500, 0.08),
]
WING_VARIANTS = [dict(), dict(tail="wp"), dict(exp_sw=0.8, tail="wp"), dict(exp_sw=0.9, tail="none")]


@pytest.mark.parametrize("j", range(4))
def test_wing_golden(j):
    p = bm.get_problem("wing")
    for x in WING_POINTS:
        assert p.evaluate(np.array(x, float), j) == pytest.approx(
            wing_by_hand(*x, **WING_VARIANTS[j]), rel=1e-12)


def test_table_costs_and_sizes():
    expect = {
        "double_well": ((1000, 1), (5, 0)),
        "rosenbrock": ((1000, 1), (5, 10)),
        "borehole": ((1000, 100, 10, 100, 10), (5, 5, 50, 5, 50)),
        "borehole3": ((1000, 100, 10), (5, 5, 50)),
        "wing": ((1000, 100, 10, 1), (5, 5, 10, 50)),
    }
    for name, (costs, sizes) in expect.items():
        p = bm.get_problem(name)
        assert p.costs == costs and p.initial_sizes == sizes
        assert p.space.direction == "minimize" and p.hf_index == 0


def test_evaluate_strict_bounds():
    p = bm.get_problem("double_well")
    with pytest.raises(ValueError):
        p.evaluate([3.5], 0)
    with pytest.raises(ValueError):
        p.evaluate([0.0], 2)


def van_der_corput(i):
    out, denom = 0.0, 1.0
    while i:
        denom *= 2
        out += (i & 1) / denom
        i >>= 1
    return out


def test_unscrambled_sobol_matches_van_der_corput():
    # in one dimension each block of 2**k Sobol points is the van der Corput
    # block of the same length (the Gray-code order only permutes it)
    u = bm.sobol_unit(1, 15, scramble=False)
    assert u[0, 0] == 0.5
    np.testing.assert_array_equal(np.sort(u[:, 0]), np.sort([van_der_corput(i) for i in range(1, 16)]))
    space = ProblemSpace(((0.0, 1.0),))
    X, _ = bm.sobol_design(space, 1, scramble=False)
    np.testing.assert_array_equal(X, [[0.5]])


def test_sobol_design_basic():
    space = bm.get_problem("borehole").space
    X, T = bm.sobol_design(space, 0, seed=1)
    assert X.shape == (0, 8)
    for n in (1, 7, 50):
        X, T = bm.sobol_design(space, n, seed=3)
        assert np.all(X >= space.lower) and np.all(X <= space.upper)
        assert len({tuple(r) for r in X}) == n
        X2, _ = bm.sobol_design(space, n, seed=3)
        np.testing.assert_array_equal(X, X2)
    with pytest.raises(ValueError):
        bm.sobol_unit(30000, 2)


def test_sobol_design_categorical_levels():
    space = ProblemSpace(((0.0, 1.0),), categorical_levels=(3, 2))
    X, T = bm.sobol_design(space, 64, seed=0)
    assert set(T[:, 0]) == {0, 1, 2} and set(T[:, 1]) == {0, 1}


def test_sobol_discrepancy_beats_random():
    ratios = []
    for seed in range(20):
        u = bm.sobol_unit(3, 64, seed=seed)
        r = np.random.default_rng(seed).random((64, 3))
        ratios.append(qmc.discrepancy(u) - qmc.discrepancy(r))
    assert np.median(ratios) < 0


def test_initial_dataset_layout():
    p = bm.get_problem("double_well")
    ds = bm.initial_dataset(p, seed=0)
    assert ds.counts == (5, 0)
    ds2 = bm.initial_dataset(p, seed=0)
    np.testing.assert_array_equal(ds.X, ds2.X)
    pb = bm.get_problem("borehole")
    ds = bm.initial_dataset(pb, seed=4)
    assert ds.counts == (5, 5, 50, 5, 50)
    np.testing.assert_allclose(ds.y[ds.S == 2], pb.evaluate(ds.X[ds.S == 2], 2))


def test_rrmse_identities():
    rng = np.random.default_rng(0)
    y = rng.normal(size=500)
    assert bm.rrmse_values(y, y) == 0.0
    assert bm.rrmse_values(y + 2.5, y) == pytest.approx(2.5 / np.std(y))
    with pytest.raises(ValueError):
        bm.rrmse_values(y, np.ones(500))
    with pytest.raises(ValueError):
        bm.rrmse(bm.get_problem("rosenbrock"), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_rrmse_order_invariant(seed):
    rng = np.random.default_rng(seed)
    yh, yl = rng.normal(size=50), rng.normal(size=50)
    perm = rng.permutation(50)
    assert bm.rrmse_values(yl[perm], yh[perm]) == pytest.approx(bm.rrmse_values(yl, yh), rel=1e-12)


def test_borehole_rrmse_ordering():
    p = bm.get_problem("borehole")
    v = [bm.rrmse(p, j, 10000, seed=0) for j in range(1, 5)]
    assert v[0] > v[1] > max(v[2], v[3])


def test_rrmse_seed_stability():
    p = bm.get_problem("borehole")
    for j in range(1, 5):
        a, b = bm.rrmse(p, j, 10000, seed=0), bm.rrmse(p, j, 10000, seed=1)
        assert abs(a - b) / a < 0.05


def test_brute_force_rosenbrock_and_double_well():
    gt = bm.brute_force_optimum("rosenbrock", n_scan=2 ** 14, n_refine=20)
    assert gt.value == pytest.approx(-456.3, abs=1e-6)
    np.testing.assert_allclose(gt.location, [1, 1], atol=1e-3)
    p = bm.get_problem("rosenbrock")
    assert abs(p.evaluate(gt.location, 0) - gt.value) < 1e-6
    dw = bm.brute_force_optimum("double_well", n_scan=2 ** 12, n_refine=10)
    assert dw.value == pytest.approx(-5.7285, abs=1e-3)
    lf = bm.brute_force_optimum("double_well", source=1, n_scan=2 ** 12, n_refine=10)
    x = np.linspace(-3, 3, 600001)
    grid_min = np.min(0.6 * x ** 4 - 0.3 * x ** 3 - 3 * x ** 2 - 1.2 * x)
    assert lf.value == pytest.approx(grid_min, abs=1e-6)
    assert lf.value < dw.value


def test_brute_force_borehole_positive():
    gt = bm.brute_force_optimum("borehole", n_scan=2 ** 14, n_refine=10)
    assert gt.value > 0
    p = bm.get_problem("borehole")
    assert abs(p.evaluate(gt.location, 0) - gt.value) < 1e-6
