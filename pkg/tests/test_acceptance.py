"""Acceptance criteria at full size.

Each test records one ``criterion N: PASS/FAIL`` line, printed in the
session summary.  Deselect with ``-m "not acceptance"`` for a quick run.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from lilypond import experiments as ex
from lilypond.clusters import H_g, kappa, volume_g
from lilypond.geometry import Config, Window
from lilypond.model import maximin_compare, neighbour_graph, solve, verify
from lilypond.sampling import SeedSpec, sample_poisson
from lilypond.stabilization import _in_balls

from . import mc_checks as L
from .helpers import record

pytestmark = pytest.mark.acceptance


def test_criterion_01_definitional():
    t0 = time.time()
    sizes = np.geomspace(10, 10_000, 25)
    worst = {}
    for d in (1, 2, 3):
        bad = 0
        biggest = 0
        for i in range(1000):
            vol = sizes[i % len(sizes)]
            phi = sample_poisson(Window("cube", vol, d), SeedSpec(1, 1000 * d + i))
            if len(phi) < 2:
                continue
            biggest = max(biggest, len(phi))
            bad += int(not verify(phi, solve(phi)).ok)
        worst[d] = (bad, biggest)
    elapsed = time.time() - t0
    ok = all(b == 0 for b, _ in worst.values()) and elapsed < 600
    record(1, ok, f"violations per d {[worst[d][0] for d in (1, 2, 3)]}, max n {max(n for _, n in worst.values())}, {elapsed:.0f}s")
    assert ok


def test_criterion_02_micro_oracles():
    cases = [((0, 1), (0.5, 0.5)), ((0, 1, 3), (0.5, 0.5, 1.5)), ((0, 1, 3, 7), (0.5, 0.5, 1.5, 2.5))]
    err = max(
        float(np.max(np.abs(solve(Config(np.array(xs, dtype=float)[:, None])).radii - np.array(want))))
        for xs, want in cases
    )
    ok = err <= 1e-12
    record(2, ok, f"max abs error {err:.1e}")
    assert ok


def _feasible(alt, dist):
    return not np.any(alt[:, None] + alt[None, :] > dist)


def test_criterion_03_maximin():
    bad = configs = 0
    for d in (1, 2):
        rng = np.random.default_rng([3, d])
        for _ in range(50):
            phi = Config(rng.random((10, d)) * 5)
            rho = solve(phi)
            dist = np.linalg.norm(phi.points[:, None] - phi.points[None], axis=2)
            np.fill_diagonal(dist, np.inf)
            nn = phi.nn_distances
            accepted = 0
            while accepted < 500:
                # half uniform alternatives, half perturbations of the lilypond radii
                if accepted % 2:
                    alt = rng.random(10) * nn
                else:
                    alt = np.clip(rho.radii * (1 + 0.1 * rng.standard_normal(10)), 0, None)
                if not _feasible(alt, dist):
                    continue
                accepted += 1
                bad += int(not maximin_compare(phi, rho, alt))
            configs += 1
    ok = bad == 0
    record(3, ok, f"{configs} configs x 500 alternatives, {bad} lex-exceed")
    assert ok


def test_criterion_04_stopping_sets():
    res = {}
    for d in (1, 2, 3):
        res[f"stability d{d}"] = L.check_stopping_stability(d, 1000, seed=4)
        res[f"localization d{d}"] = L.check_localization(d, 1000, seed=4)
    res["chain corpus"] = L.check_chain_corpus(10_000, seed=4)
    ok = all(r["violations"] == 0 and r["samples"] >= 1000 for r in res.values())
    record(4, ok, ", ".join(f"{k} {r['violations']}/{r['samples']}" for k, r in res.items()))
    assert ok


def test_criterion_05_fence_and_G_lemmas():
    res = {
        "fence blocking d2": L.check_fence_blocking(2, 500, seed=5),
        "two fences d2": L.check_two_fences(2, 500, seed=5),
        "two fences d2 cube": L.check_two_fences(2, 500, seed=5, window_shape="cube"),
        "two fences d2 ball": L.check_two_fences(2, 500, seed=5, window_shape="ball"),
        "insulation d1": L.check_insulation(1, 500, seed=5),
        "insulation d2": L.check_insulation(2, 500, seed=5),
        "windowed insulation d1 cube": L.check_insulation(1, 500, seed=5, window_shape="cube"),
        "windowed insulation d1 ball": L.check_insulation(1, 500, seed=5, window_shape="ball"),
        "external stabilization d1": L.check_external_stabilization(500),
        "cluster containment d1": L.check_cluster_containment(500),
        "cluster containment d1 windowed": L.check_cluster_containment(500, windowed=True),
    }
    ok = all(r["violations"] == 0 and r["samples"] >= 500 for r in res.values())
    record(5, ok, ", ".join(f"{k} {r['violations']}/{r['samples']}" for k, r in res.items()))
    assert ok


def test_criterion_06_kappa_and_volume():
    mismatch = 0
    for d in (1, 2, 3):
        for i in range(200):
            phi = sample_poisson(Window("cube", 200.0, d), SeedSpec(6, 100 * d + i))
            rho = solve(phi)
            mismatch += int(kappa(phi, rho) != neighbour_graph(phi, rho).n_components())
    rng = np.random.default_rng(6)
    outside = 0
    worst = 0.0
    for k in range(50):
        phi = sample_poisson(Window.cube_of_side(12.0, 2), SeedSpec(66, k))
        rho = solve(phi).radii
        exact = H_g(phi, rho, volume_g(2))
        lo = phi.points.min(axis=0) - rho.max()
        hi = phi.points.max(axis=0) + rho.max()
        m = 40_000
        hit = _in_balls(rng.uniform(lo, hi, (m, 2)), phi.points, rho)
        box = float(np.prod(hi - lo))
        se = box * math.sqrt(hit.mean() * (1 - hit.mean()) / m)
        z = abs(box * hit.mean() - exact) / se
        worst = max(worst, z)
        outside += int(z > 3)
    ok = mismatch == 0 and outside == 0
    record(6, ok, f"kappa mismatches {mismatch}/600, volume samples beyond 3 SE {outside}/50 (max |z| {worst:.2f})")
    assert ok


def test_criterion_07_pZ():
    t0 = time.time()
    lines = []
    ok = True
    for d in (1, 2):
        s = ex.estimate_pZ(d, 10_000, 7).summary
        ok &= abs(s["z_difference"]) <= 3
        lines.append(f"d{d} ind {s['p_hat_indicator']:.4f} mom {s['p_hat_moment']:.4f} z {s['z_difference']:+.2f} fail {s['certificate_failures']}")
    elapsed = time.time() - t0
    ok &= elapsed < 900
    record(7, bool(ok), "; ".join(lines) + f"; {elapsed:.0f}s")
    assert ok


def test_criterion_08_tails():
    lines = []
    ok = True
    grids = {
        1: dict(thresholds=[1, 2, 3, 4, 6, 8], volume_thresholds=[1, 2, 3, 4, 6, 8], card_thresholds=[2, 3, 4, 6, 8, 12]),
        2: dict(thresholds=[1, 1.5, 2, 2.5, 3, 4], volume_thresholds=[0.5, 1, 2, 3, 4, 6], card_thresholds=[2, 3, 4, 6, 8, 12]),
    }
    for d in (1, 2):
        rep = ex.tail_survey(d, reps=2000, seed=8, **grids[d])
        s = rep.summary
        ok &= s["empty_ball_violations"] == 0 and s["envelope_ok"]
        for name, f in s["fits"].items():
            ok &= f["monotone"] and f["upper"]["slope"] < 0
            lines.append(f"d{d} {name} slope {f['upper']['slope']:.3f} R2 {f['upper']['r2']:.3f}")
        lines.append(f"d{d} empty-ball violations {s['empty_ball_violations']}, envelope {s['envelope_ok']}, failures {s['certificate_failures']}")
    record(8, bool(ok), "; ".join(lines))
    assert ok


def test_criterion_09_clt():
    d = 2
    rep = ex.clt_run(d, ["volume", "kappa"], "poisson", [250, 500, 1000, 2000], 2000, 9)
    top = {c["functional"]: c for c in rep.cells if c["n"] == 2000}
    ratios = rep.summary["top_var_ratio"]
    ok = all(abs(r - 1) <= 0.15 for r in ratios.values())
    ok &= all(c["ks_stat"] < c["ks_crit_01"] for c in top.values())
    const_p = ex.clt_run(d, ["const:3"], "poisson", [250, 500, 1000, 2000], 2000, 9)
    const_b = ex.clt_run(d, ["const:3"], "binomial", [250, 500, 1000, 2000], 2000, 9)
    vp = [c["var_over_n"] for c in const_p.cells]
    ok &= all(abs(v - 9.0) <= 0.9 for v in vp)
    ok &= all(c["var"] == 0 for c in const_b.cells)
    detail = ", ".join(f"{k} ratio {v:.3f} KS {top[k]['ks_stat']:.4f}<{top[k]['ks_crit_01']:.4f}" for k, v in ratios.items())
    record(9, bool(ok), f"{detail}; const Poisson var/n {[round(v, 2) for v in vp]}; binomial var 0")
    assert ok


def test_criterion_10_percolation():
    t0 = time.time()
    grid = np.round(np.arange(0, 1.0001, 0.05), 10)
    rep = ex.percolation_sweep(2, grid, [64, 256], 200, 10)
    elapsed = time.time() - t0
    s = rep.summary
    p0 = {c["scale"]: c["p_cross"] for c in rep.cells if c["delta"] == 0}
    dc = s["delta_c_hat"]
    ratio = dc["256.0"] / dc["64.0"]
    ok = s["monotonicity_violations"] == 0 and s["blocking_violations"] == 0
    ok &= p0[256.0] < 0.2 and p0[256.0] <= p0[64.0]
    ok &= 0.5 <= ratio <= 2
    ok &= elapsed < 1800
    record(
        10,
        bool(ok),
        f"monotone violations {s['monotonicity_violations']}, p(delta=0) {p0[64.0]:.3f}->{p0[256.0]:.3f}, "
        f"delta_c {dc['64.0']:.3f}/{dc['256.0']:.3f}, blocking checks {s['blocking_checks']} violations {s['blocking_violations']}, {elapsed:.0f}s",
    )
    assert ok


def test_criterion_11_field():
    rep = ex.field_experiment(1, 40.0, 1e-4, 12, 60, 11)
    s = rep.summary
    ok = s["locality_mismatches"] == 0 and abs(s["far_correlation"]) <= 3 * s["far_correlation_se"]
    record(11, bool(ok), f"locality mismatches {s['locality_mismatches']}, far corr {s['far_correlation']:.4f} (SE {s['far_correlation_se']:.4f}), mean Y {s['mean_Y']:.3f}")
    assert ok


_BIG_SOLVE = """
import resource, time
from lilypond.geometry import Window
from lilypond.model import solve, verify
from lilypond.sampling import SeedSpec, sample_poisson
phi = sample_poisson(Window("cube", 100000.0, 2), SeedSpec(12))
t = time.time()
rho = solve(phi)
el = time.time() - t
print(len(phi), el, verify(phi, rho).ok, resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)
"""


def test_criterion_12_scale():
    out = subprocess.run([sys.executable, "-c", _BIG_SOLVE], capture_output=True, text=True, check=True).stdout.split()
    n, elapsed, valid, rss_kb = int(out[0]), float(out[1]), out[2] == "True", int(out[3])
    ok = elapsed <= 60 and rss_kb <= 2 * 1024 * 1024 and valid
    record(12, ok, f"n {n}, solve {elapsed:.1f}s, peak RSS {rss_kb / 1024:.0f} MB, verified {valid}")
    assert ok
