import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chipletplace.metrics import (
    METRICS, UndefinedCorrelationError, compare_runs, field_correlations, pearson, percent_delta,
    read_comparison_csv,
)
from chipletplace.thermal import ScalarField, plane_gradient
from oracles import two_pass_pearson


def test_perfect_relations():
    x = np.linspace(-3, 7, 50)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-15)


def test_matches_two_pass_oracle():
    rng = np.random.default_rng(8)
    for _ in range(50):
        x, y = rng.normal(size=100), rng.normal(size=100) * 3 + 0.4 * rng.normal(size=100)
        assert abs(pearson(x, y) - two_pass_pearson(x, y)) <= 1e-12


def test_constant_input_raises():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 2, 3], [4, 4, 4])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [2])


vecs = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=40)


@settings(max_examples=200)
@given(vecs, st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-50, 50))
def test_symmetry_and_affine_invariance(xs, seed, scale, shift):
    x = np.array(xs)
    y = np.random.default_rng(seed).normal(size=x.size)
    if np.ptp(x) < 1e-3:
        return
    r = pearson(x, y)
    assert abs(r - pearson(y, x)) <= 1e-12
    assert abs(r - pearson(scale * x + shift, y)) <= 1e-12
    assert abs(r - pearson(x, scale * y + shift)) <= 1e-12
    assert -1.0 <= r <= 1.0


def _fields(t, s):
    roles = ("interposer",)
    mk = lambda v: ScalarField(values=v[None], dx=0.5, dy=0.5, dz=np.ones(1), roles=roles)
    g = plane_gradient(t, 0.5, 0.5)
    return mk(t), mk(s), mk(g), g


def test_gradient_proportional_stress_gives_unit_gs():
    yy, xx = np.mgrid[0:64, 0:64] * 0.5
    t = 40 + np.sin(xx / 5) * np.cos(yy / 7) * 10 + 0.1 * xx**2
    tf, _, gf, g = _fields(t, t)
    sf = ScalarField(values=(3.0 * g)[None], dx=0.5, dy=0.5, dz=np.ones(1), roles=("interposer",))
    c = field_correlations(tf, sf, gf)
    assert c["gs"] == pytest.approx(1.0, abs=1e-12)


def test_independent_noise_small_ts():
    rng = np.random.default_rng(21)
    ok = 0
    for _ in range(100):
        t = rng.normal(60, 5, (64, 64))
        s = rng.normal(100, 10, (64, 64))
        tf, sf, gf, _ = _fields(t, s)
        ok += abs(field_correlations(tf, sf, gf)["ts"]) < 0.1
    assert ok >= 95


def test_constant_stress_field_raises():
    t = np.random.default_rng(0).normal(size=(8, 8))
    tf, sf, gf, _ = _fields(t, np.full((8, 8), 5.0))
    with pytest.raises(UndefinedCorrelationError):
        field_correlations(tf, sf, gf)
    assert field_correlations(tf, sf, gf, strict=False) == {"ts": None, "gs": None}


def test_mismatched_grids():
    t = np.random.default_rng(0).normal(size=(8, 8))
    tf, _, gf, _ = _fields(t, t)
    sf = ScalarField(values=np.ones((1, 8, 9)), dx=0.5, dy=0.5, dz=np.ones(1), roles=("interposer",))
    with pytest.raises(ValueError):
        field_correlations(tf, sf, gf)


# -- run comparison ----------------------------------------------------------


def report(obj, t, s, wl, arch="ascend910", seed=0):
    return {
        "architecture": arch, "objective": obj, "seed": seed,
        "best": {"metrics": {"peak_temp": t, "peak_stress": s, "wirelength": wl}},
        "stats": {"gradient": {"mean": 1.0, "std": 0.5, "max": 3.0}, "correlations": {"ts": 0.2, "gs": 0.4}},
    }


# reference Ascend910 rows (temperature C, stress MPa, wirelength mm)
ASCEND_WT = report("wt", 81.06, 232.63, 1820.0)
ASCEND_WST = report("wst", 81.47, 222.14, 1620.0)


def test_reference_stress_delta():
    c = compare_runs([ASCEND_WT, ASCEND_WST])
    pct = c.deltas["peak_stress"]["pct"]
    assert round(pct, 1) == -4.5
    # hand arithmetic: (222.14 - 232.63) / 232.63 = -10.49 / 232.63
    assert pct == pytest.approx(-10.49 / 232.63 * 100, rel=1e-3)
    assert c.deltas["peak_temp"]["pct"] == pytest.approx(0.41 / 81.06 * 100, rel=1e-3)
    assert c.deltas["wirelength"]["pct"] == pytest.approx(-200 / 1820 * 100, rel=1e-3)


def test_identical_reports_zero_delta():
    c = compare_runs([ASCEND_WT, {**copy.deepcopy(ASCEND_WT), "objective": "wst"}])
    for m in METRICS:
        assert c.deltas[m]["pct"] == 0.0 and c.deltas[m]["abs"] == 0.0


def test_mixed_architectures_raise():
    with pytest.raises(ValueError, match="mix"):
        compare_runs([ASCEND_WT, report("wst", 1, 1, 1, arch="toy4")])
    with pytest.raises(ValueError):
        compare_runs([])


def test_swap_antisymmetry():
    fwd = compare_runs([ASCEND_WT, ASCEND_WST])
    rev = compare_runs([ASCEND_WT, ASCEND_WST], baseline="wst", candidate="wt")
    for m in METRICS:
        assert fwd.deltas[m]["abs"] == -rev.deltas[m]["abs"]
        if fwd.deltas[m]["abs"]:
            assert math.copysign(1, fwd.deltas[m]["pct"]) == -math.copysign(1, rev.deltas[m]["pct"])


def test_medians_over_seeds():
    runs = [report("wt", t, 200, 1000, seed=i) for i, t in enumerate([80, 90, 85, 70, 99])]
    c = compare_runs(runs)
    row = c.rows["wt"]
    assert row["peak_temp"] == 85 and row["peak_temp_min"] == 70 and row["peak_temp_max"] == 99
    assert row["n_runs"] == 5
    assert c.deltas == {}


def test_csv_round_trip_and_table():
    c = compare_runs([ASCEND_WT, report("ws", 82.0, 225.0, 1900.0), ASCEND_WST])
    rows = read_comparison_csv(c.to_csv())
    assert list(rows)[:3] == ["wt", "ws", "wst"]
    assert rows["wst"]["peak_stress"] == 222.14
    assert rows["delta_pct_wst_vs_wt"]["peak_stress"] == c.deltas["peak_stress"]["pct"]
    table = c.format_table()
    assert "WST vs WT" in table and "-4.51%" in table


def test_percent_delta():
    assert percent_delta(200.0, 150.0) == -25.0
    assert percent_delta(100.0, 100.0) == 0.0
