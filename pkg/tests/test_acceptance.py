"""Acceptance suite: one test (or a small group) per criterion, each tagged with the criterion marker.

The terminal summary prints one PASS/FAIL line per criterion.
"""
import json
import math
import time
from pathlib import Path as FsPath

import numpy as np
import pytest
from conftest import OPERATORS

from mmsde.cli import run_experiment
from mmsde.coefficients import Affine, Constant
from mmsde.csvio import read_csv
from mmsde.flil import build_limit_set_net, flil_experiment, phi_large, transformed_coefficients
from mmsde.ldp_harness import EndpointIn, bihari_bound, fw_tube_estimate, mc_probability, rho_eta
from mmsde.monotone_ops import (
    Ball,
    Box,
    ConvexSubdifferential,
    HalfSpace,
    IndicatorFunction,
    IndicatorSubdifferential,
    L1Norm,
    QuadraticFunction,
    moreau_envelope,
    operator_property_report,
    yosida,
)
from mmsde.msde_solver import (
    ModelSpec,
    boundary_support_check,
    free_model,
    half_line_model,
    integrate,
    integrate_yosida,
    reflect_values,
    simulate,
)
from mmsde.paths import Control, Path, TimeGrid, brownian_values
from mmsde.rate_function import (
    RateConfig,
    random_interior_path,
    rate_endpoint,
    rate_interior_path,
    rate_path,
    reflected_via_gamma,
    skeleton,
)
from mmsde.streams import stream

INF = float("inf")
CONFIGS = FsPath(__file__).resolve().parents[1] / "configs"

# Independent normal-CDF evaluations of 2 (1 - Phi(1 / sqrt(eps))), frozen.
EXACT_P = {0.2: 0.025347318677468273, 0.1: 0.0015654022580025488, 0.05: 7.744216431044096e-06}
EXACT_EPS_LOG_P = {0.2: -0.7350164653262378, 0.1: -0.6459612454150123, 0.05: -0.5884282130078436}


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# --------------------------------------------------------------------------------------------
# 1
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(1, "resolvent / Yosida property suite")
def test_operator_properties_all_kinds():
    with Timer() as t:
        reports = [(op, operator_property_report(op, m, 1000, seed=11)) for op, m in OPERATORS]
        # Moreau-gradient identity: 10^3 random cases spread over the proximable functions
        funcs = [QuadraticFunction(0.5), L1Norm(2.0), IndicatorFunction(Ball((0.0, 1.0), 1.0)),
                 IndicatorFunction(Box((-1.0, 0.0), (2.0, 1.0)))]
        rng = stream(11, "moreau")
        h = 1e-6
        worst = -INF
        for i in range(1000):
            f = funcs[i % len(funcs)]
            x, a = rng.uniform(-5, 5, 2), rng.uniform(0.1, 3.0)
            grad = np.array([(moreau_envelope(f, a, x + h * e) - moreau_envelope(f, a, x - h * e)) / (2 * h)
                             for e in np.eye(2)])
            val = moreau_envelope(f, a, x)
            err = np.max(np.abs(grad - yosida(ConvexSubdifferential(f), a, x)))
            worst = max(worst, err - max(1e-6, 1e-3 * abs(val)))
    failed = [(type(op).__name__, r.to_dict()) for op, r in reports if not r.passed]
    assert not failed
    assert worst <= 0.0
    assert t.seconds < 10


# --------------------------------------------------------------------------------------------
# 2
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(2, "discrete Skorohod identity")
def test_prox_walk_equals_gamma_of_free_walk():
    with Timer() as t:
        model = half_line_model()
        g = TimeGrid(1.0, 1000)
        rng = stream(2, "skorohod")
        x0 = rng.uniform(0, 1, (1000, 1))
        dW = rng.standard_normal((1000, 1000, 1)) * math.sqrt(g.dt)
        X, _ = integrate(model, g.steps, x0, 1.0, dW)
        free = np.concatenate([x0[:, None, :], x0[:, None, :] + np.cumsum(dW, axis=1)], axis=1)
        err = np.max(np.abs(X[..., 0] - reflect_values(free[..., 0])))
    assert err <= 1e-12
    assert t.seconds < 5


# --------------------------------------------------------------------------------------------
# 3
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(3, "penalization convergence")
def test_yosida_penalization_converges():
    with Timer() as t:
        model = half_line_model()
        g = TimeGrid(1.0, 2000)
        dW = np.diff(np.stack([brownian_values(1, g, 3, r) for r in range(16)]), axis=1)
        x0 = np.zeros((16, 1))
        ref, _ = integrate(model, g.steps, x0, 1.0, dW)
        means = []
        for a in (1e-1, 1e-2, 1e-3):
            Xa = integrate_yosida(model, a, g.steps, x0, 1.0, dW)
            means.append(float(np.mean(np.max(np.abs(Xa - ref)[..., 0], axis=1))))
    assert means[0] > means[1] > means[2]
    assert means[0] >= 3 * means[2]
    assert t.seconds < 60


# --------------------------------------------------------------------------------------------
# 4
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(4, "LDP scan against the normal-CDF oracle")
def test_ldp_scan_brackets_exact_probabilities():
    with Timer() as t:
        model = half_line_model()
        event = EndpointIn(Box([1.0], [INF]))
        g = TimeGrid(1.0, 16)
        n = 1_000_000
        est = {}
        for i, eps in enumerate((0.2, 0.1, 0.05)):
            r = mc_probability(model, eps, event, n, 4, g, scheme="bridge", tag=f"scan/{i}")
            est[eps] = r.estimate
            p = EXACT_P[eps]
            assert abs(r.estimate - p) <= 4 * math.sqrt(p * (1 - p) / n), (eps, r.estimate, p)
        elp = [eps * math.log(est[eps]) for eps in (0.2, 0.1, 0.05)]
        assert elp[0] < elp[1] < elp[2] < -0.5
        rate = rate_endpoint(model, event.target, g)
    assert [round(v, 3) for v in EXACT_EPS_LOG_P.values()] == [-0.735, -0.646, -0.588]
    assert rate.value == pytest.approx(0.5, abs=1e-3)
    assert t.seconds < 300


# --------------------------------------------------------------------------------------------
# 5
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(5, "rate-function oracle agreement")
def test_rate_function_oracles():
    with Timer() as t:
        model = half_line_model(x0=1.0)
        g = TimeGrid(1.0, 32)
        gaps = []
        for i in range(20):
            f = random_interior_path(g, 0, i)
            gaps.append(abs(rate_interior_path(model, f).value - rate_path(model, f, tol=1e-3).value))
        reflected = half_line_model()
        grid = TimeGrid(1.0, 16)
        unreachable = rate_endpoint(reflected, Box([-INF], [-1.0]), grid).value
        scaled = {a: rate_endpoint(reflected, Box([a], [INF]), grid).value for a in (0.5, 1.0, 2.0)}
    assert max(gaps) <= 1e-2
    assert unreachable == INF
    for a, v in scaled.items():
        assert v == pytest.approx(a * a / 2, abs=1e-3)
    assert t.seconds < 300


# --------------------------------------------------------------------------------------------
# 6
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(6, "Freidlin-Wentzell tube trend")
def test_tube_probability_trend():
    with Timer() as t:
        model = half_line_model()
        g = TimeGrid(1.0, 64)
        h = Control.constant(g, [1.0])
        r = {eps: fw_tube_estimate(model, h, 0.5, 0.2, eps, 100_000, 6) for eps in (0.1, 0.05)}
    lo = {e: v.estimate - 1.96 * v.std_error for e, v in r.items()}
    hi = {e: v.estimate + 1.96 * v.std_error for e, v in r.items()}
    strictly_smaller = r[0.05].estimate < r[0.1].estimate and hi[0.05] < lo[0.1]
    both_zero = r[0.05].hits == 0 and r[0.1].hits == 0
    assert strictly_smaller or both_zero
    assert t.seconds < 180


@pytest.mark.criterion(6, "Freidlin-Wentzell tube trend")
def test_tube_event_is_empty_for_this_geometry():
    # the skeleton is Gamma(h) and Gamma is 2-Lipschitz in sup norm, so a noise path within
    # eta = 0.2 of h keeps X within 0.4 < alpha = 0.5 of the skeleton
    g = TimeGrid(1.0, 64)
    h = g.times
    rng = stream(6, "lipschitz")
    w = h + rng.uniform(-0.2, 0.2, (2000, g.N + 1))
    w[:, 0] = 0.0
    gap = np.max(np.abs(reflect_values(w) - reflect_values(h)), axis=1)
    assert np.all(gap <= 2 * np.max(np.abs(w - h), axis=1) + 1e-12)
    assert np.all(gap < 0.5)


# --------------------------------------------------------------------------------------------
# 7
# --------------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def strassen_report():
    t0 = time.perf_counter()
    model = free_model(1)
    net = build_limit_set_net(model, 256, 0, grid=TimeGrid(1.0, 128))
    rep = flil_experiment(model, 1.5, 38, range(1, 9), net=net, polish=True)
    return rep, time.perf_counter() - t0


@pytest.mark.criterion(7, "Strassen functional LIL")
def test_strassen_distance_window(strassen_report):
    rep, seconds = strassen_report
    s = rep.summary(0.35)
    assert s["seeds_below_threshold"] >= 6, s["window_max"]
    assert seconds < 600


@pytest.mark.criterion(7, "Strassen functional LIL")
def test_strassen_endpoint_band(strassen_report):
    rep, _ = strassen_report
    s = rep.summary(0.35)
    assert 0.8 <= s["max_z_end_window"] <= 1.2, s["max_z_end_window"]


# --------------------------------------------------------------------------------------------
# 8
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(8, "half-space FLIL plumbing")
def test_half_space_flil_plumbing():
    with Timer() as t:
        models = [half_line_model(), ModelSpec(1, 1, Affine([0.3], [[-0.5]]), Constant([[1.2]]),
                                               IndicatorSubdifferential(HalfSpace(0)), [0.5])]
        models += [transformed_coefficients(m, phi_large(u), u) for m in models for u in (20.0, 1e4)]
        g = TimeGrid(1.0, 128)
        worst = 0.0
        for i in range(20):
            model = models[i % len(models)]
            h = Control(g, 3 * stream(8, "gamma", i).standard_normal((128, 1)))
            worst = max(worst, float(np.max(np.abs(skeleton(model, h).values - reflected_via_gamma(model, h).values))))
        rep = flil_experiment(half_line_model(), 1.5, 30, range(1, 5), net_size=64, scheme="bridge")
        support = []
        for i, model in enumerate(models):
            for eps in (1.0, 0.1):
                sol = simulate(model, eps, W=100 + i, grid=TimeGrid(1.0, 500))
                support.append(boundary_support_check(sol, HalfSpace(0)).passed)
                support.append(bool(np.all(sol.X.values >= 0)))
    assert worst <= 1e-10
    assert all(v >= 0 for v in rep.min_value.values())
    assert all(support)
    assert t.seconds < 60


# --------------------------------------------------------------------------------------------
# 9
# --------------------------------------------------------------------------------------------


@pytest.mark.criterion(9, "rho_eta and Bihari formulas")
def test_rho_and_bihari_formulas():
    with Timer() as t:
        assert abs(rho_eta(0.05, 0.1) - 0.05 * math.log(20)) <= 1e-12
        assert abs(rho_eta(0.2, 0.1) - (0.1 * math.log(10) + (math.log(10) - 1) * 0.1)) <= 1e-12
        assert abs(rho_eta(0.1, 0.1) - 0.1 * math.log(10)) <= 1e-12
        x = np.linspace(0.0, 3.0, 30001)
        for eta in (1e-3, 0.05, 0.1, 0.3):
            r = rho_eta(x, eta)
            assert np.all(np.diff(r) >= -1e-12)
            assert np.all(np.diff(r, 2) <= 1e-12)
        etas = [0.3, 0.2, 0.1, 0.01, 1e-3]
        for big, small in zip(etas, etas[1:]):
            assert np.all(rho_eta(x, big) <= rho_eta(x, small) + 1e-12)
        one = lambda s: np.ones_like(s)  # noqa: E731
        assert abs(bihari_bound(0.01, one, math.log(2)) - 0.1) <= 1e-12
        assert bihari_bound(0.01, one, 0.0) == 0.01
        assert bihari_bound(0.01, lambda s: np.zeros_like(s), 7.0) == 0.01
    assert t.seconds < 1


@pytest.mark.criterion(9, "rho_eta and Bihari formulas")
def test_power_inequality_on_unit_interval():
    p, eta = 2.0, 1e-3
    x = np.linspace(0.0, 1.0, 100_001)[1:]
    lhs = x**p * rho_eta(x, eta)
    rhs = rho_eta(x ** (1 + p), eta) / (1 + p)
    bad = x[lhs > rhs + 1e-12]
    assert bad.size == 0, f"violated on [{bad.min():.4g}, {bad.max():.4g}]; max excess {np.max(lhs - rhs):.3g}"


# --------------------------------------------------------------------------------------------
# 10
# --------------------------------------------------------------------------------------------

SMALL = {
    "simulate_halfline": {},
    "yosida_converge": {"paths": 4},
    "rate_halfline": {"restarts": 2},
    "ldp_scan_halfline": {"n": 50_000, "eps_grid": [0.3, 0.2], "compare_rate": False},
    "fw_tube_halfline": {"n": 20_000},
    "flil_strassen": {"jmax": 20, "seeds": [1, 2, 3], "net_size": 32, "polish": True},
    "validate_ops_halfline": {"cases": 200},
}


def _artifacts(d: FsPath) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".json")
            and p.name != "manifest.json"}


@pytest.mark.criterion(10, "reproducibility")
@pytest.mark.parametrize("name", sorted(SMALL))
def test_rerun_reproduces_artifacts(tmp_path, name):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    cfg["params"].update(SMALL[name])
    runs = {}
    for label, workers in (("a", 1), ("b", 1), ("c", 8)):
        status, _ = run_experiment(cfg, workers=workers, output_dir=str(tmp_path / label))
        assert status == 0
        runs[label] = _artifacts(tmp_path / label)
    assert runs["a"] == runs["b"]
    assert runs["a"].keys() == runs["c"].keys()
    for fname, raw in runs["a"].items():
        if fname.endswith(".csv"):
            ha, da = read_csv(tmp_path / "a" / fname)
            hc, dc = read_csv(tmp_path / "c" / fname)
            assert ha == hc and da.shape == dc.shape
            assert np.allclose(da, dc, rtol=0, atol=1e-12, equal_nan=True)
        else:
            assert _close(json.loads(raw), json.loads(runs["c"][fname]))


def _close(a, b) -> bool:
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_close(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return (math.isnan(a) and math.isnan(b)) or abs(a - b) <= 1e-12 or a == b
    return a == b
