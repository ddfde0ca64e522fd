"""Certified Monte Carlo harnesses.

Infinite-volume quantities are read off finite Poisson samples on growing
balls ``B_L(0)``.  A sample is accepted only with a certificate that the
quantity does not depend on points outside ``B_L``:

* ``"G"``: the Palm sample lies in ``G_{L/9}(0)``, so the origin cluster sits
  in ``B_{5L/9}`` and every radius in ``B_{8L/9}`` is exact.
* ``"stopping"``: a fence ``F(0, s, w)`` keeps outside grains away from
  ``B_{s-2w}``, and each relevant point ``x`` has ``S(x, phi)`` inside the
  open ball ``B_L``, which makes its radius exact.

A failed certificate extends the same sample to ``B_{2L}`` with a fresh
substream; failures beyond ``Lmax`` are counted and reported.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from . import clusters as cl
from .geometry import Config, Window, as_point, ball_volume
from .model import solve
from .sampling import NestedBallSampler, SeedSpec, add_point, sample_binomial, sample_poisson
from .stabilization import ChainLinks, fence_cover, in_fence, in_G, min_gap, point_within, stopping_set, stopping_set_within

SCHEMA_VERSION = 1
THREADS_ENV = "LILYPOND_THREADS"


class CertificationError(RuntimeError):
    """No certificate was obtained before the window reached ``Lmax``."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    columns: list
    cells: list
    summary: dict = field(default_factory=dict)
    raw: list | None = None
    schema_version: int = SCHEMA_VERSION

    def column(self, name: str) -> np.ndarray:
        return np.array([c[name] for c in self.cells])


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def map_replicates(fn, items, threads: int | None = None) -> list:
    """``[fn(i) for i in items]`` on a worker pool; results keep input order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def mean_se(x) -> tuple:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
    return float(x.mean()), se


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple:
    if n == 0:
        return math.nan, math.nan
    lo, hi = proportion_confint(k, n, alpha=2 * stats.norm.sf(z), method="wilson")
    return float(lo), float(hi)


# ----------------------------------------------------------- certificates

FENCE_WIDTH = {1: 5.0, 2: 2.5, 3: 2.0}


def fence_width(d: int) -> float:
    """Fence width whose half-ball has volume about 10."""
    if d in FENCE_WIDTH:
        return FENCE_WIDTH[d]
    return (20.0 / ball_volume(d)) ** (1.0 / d)


def _exact_radii(phi: Config, idx, L: float) -> bool:
    """Whether the radii of ``phi[idx]`` agree with every extension of ``phi`` beyond ``B_L``."""
    idx = np.asarray(sorted(idx), dtype=np.int64)
    if len(idx) == 0:
        return True
    if len(phi) < 2:
        return False
    links = ChainLinks.for_anchors(phi, idx)
    zero = np.zeros(phi.dim)
    return all(point_within(phi, k, zero, L, links) for k in idx.tolist())


def _fence_radius(phi: Config, w: float, s_min: float, L: float, need=None):
    """Smallest ``s`` on the grid ``s_min + j w`` with ``F(0, s, w)`` and ``need(s)``."""
    s = s_min
    zero = np.zeros(phi.dim)
    while s + w <= L:
        if (need is None or need(s)) and in_fence(phi, fence_cover(zero, s, w)):
            return s
        s += w
    return None


@dataclass
class CertifiedSample:
    stats: cl.ClusterStats
    L: float
    certificate: dict
    attempts: int
    config: Config = field(repr=False)
    radii: np.ndarray = field(repr=False)

    @property
    def origin_radius(self) -> float:
        k = self.config.index_of(np.zeros(self.config.dim))
        return float(self.radii[k])


def _origin_cluster(phi0: Config):
    rho = solve(phi0)
    labels = cl.components(phi0, rho)
    stats_ = cl.cluster_stats(np.zeros(phi0.dim), phi0, rho, labels)
    return rho, stats_


def _certify_g(phi0: Config, L: float):
    r = L / 9.0
    if not in_G(phi0, np.zeros(phi0.dim), r):
        return None
    rho, st = _origin_cluster(phi0)
    return rho, st, {"kind": "G", "r": r}


def _certify_stopping(phi0: Config, L: float, w: float):
    rho, st = _origin_cluster(phi0)
    radii = rho.radii
    extent = float(np.max(np.linalg.norm(st.points, axis=1) + radii[st.members]))
    s = _fence_radius(phi0, w, max(2 * w, 2 * w + extent + 1e-9), L)
    if s is None:
        return None
    # members and every point that could touch one must have exact radii
    nn = phi0.nn_distances
    members = st.members
    check = set(members.tolist())
    for m in members:
        near = phi0.ball_indices(phi0.points[m], radii[m] + float(nn.max()))
        dist = np.linalg.norm(phi0.points[near] - phi0.points[m], axis=1)
        check.update(near[dist <= radii[m] + nn[near]].tolist())
    if not _exact_radii(phi0, check, L):
        return None
    return rho, st, {"kind": "stopping", "fence_s": s, "fence_w": w}


def exact_cluster_sample(
    d: int,
    seed: SeedSpec,
    L0: float,
    Lmax: float,
    certificate: str = "G",
    width: float | None = None,
) -> CertifiedSample:
    """Origin cluster of the Palm process with an exactness certificate."""
    if not L0 < Lmax:
        raise ValueError("need L0 < Lmax")
    if certificate not in ("G", "stopping"):
        raise ValueError(f"unknown certificate {certificate!r}")
    w = fence_width(d) if width is None else float(width)
    sampler = NestedBallSampler(d, seed, L0)
    attempts = 0
    tried = []
    while True:
        attempts += 1
        phi0 = add_point(sampler.config(), np.zeros(d))
        L = sampler.L
        if certificate == "G":
            out = _certify_g(phi0, L)
        else:
            out = _certify_stopping(phi0, L, w)
        tried.append(L)
        if out is not None:
            rho, st, cert = out
            return CertifiedSample(st, L, cert, attempts, phi0, rho.radii)
        if sampler.L * 2 > Lmax:
            raise CertificationError(
                f"no {certificate} certificate up to L={L:g}",
                {"windows": tried, "points": len(phi0), "seed": [seed.master, seed.stream]},
            )
        sampler.extend()


# --------------------------------------------------------------- volume fraction


def _indicator_sample(d: int, seed: SeedSpec, Lmax: float, w: float):
    """Whether a uniform point of the central unit cube is covered; ``None`` on failure."""
    u = seed.rng(10_000).random(d) - 0.5
    s_min = 2 * w + 1.0
    L = 3 * w + 1.0 + 2.0
    sampler = NestedBallSampler(d, seed, L)
    extensions = 0
    while True:
        phi = sampler.config()
        ok = len(phi) >= 2
        if ok:
            s = _fence_radius(phi, w, s_min, sampler.L)
            ok = s is not None
        if ok:
            inside = phi.ball_indices(np.zeros(d), s, open=True)
            nn = phi.nn_distances
            cand = inside[np.linalg.norm(phi.points[inside] - u, axis=1) <= nn[inside]]
            ok = _exact_radii(phi, cand, sampler.L)
        if ok:
            if len(cand) == 0:
                return False, extensions
            rho = solve(phi).radii
            covered = np.linalg.norm(phi.points[cand] - u, axis=1) <= rho[cand]
            return bool(covered.any()), extensions
        if sampler.L * 2 > Lmax:
            return None, extensions
        sampler.extend()
        extensions += 1


def _moment_sample(d: int, seed: SeedSpec, L0: float, Lmax: float):
    """``rho(0, Phi^0)``; ``None`` on failure."""
    sampler = NestedBallSampler(d, seed, L0)
    zero = np.zeros(d)
    extensions = 0
    while True:
        phi = sampler.config()
        if len(phi):
            if stopping_set_within(zero, phi, zero, sampler.L):
                S = stopping_set(zero, phi)
                local = phi.subset(np.flatnonzero(S.contains(phi.points)))
                local0 = add_point(local, zero)
                return float(solve(local0).radii[-1]), extensions
        if sampler.L * 2 > Lmax:
            return None, extensions
        sampler.extend()
        extensions += 1


def estimate_pZ(d: int, reps: int, seed: int, Lmax: float = 1024.0, threads: int | None = None) -> ExperimentReport:
    """Volume fraction from a coverage indicator and from ``b_d E[rho_0^d]``."""
    if reps < 100:
        raise ValueError("estimate_pZ needs reps >= 100")
    w = fence_width(d)
    L0 = 4.0 * w

    def one(i):
        base = SeedSpec(seed, i)
        ind, e1 = _indicator_sample(d, base.child(0), Lmax, w)
        rho0, e2 = _moment_sample(d, base.child(1), L0, Lmax)
        return ind, rho0, e1 + e2

    res = map_replicates(one, range(reps), threads)
    ind = np.array([r[0] for r in res if r[0] is not None], dtype=float)
    rho0 = np.array([r[1] for r in res if r[1] is not None], dtype=float)
    fail_ind = sum(r[0] is None for r in res)
    fail_mom = sum(r[1] is None for r in res)
    p_ind, se_ind = mean_se(ind)
    mom = ball_volume(d) * rho0**d
    p_mom, se_mom = mean_se(mom)
    comb = math.sqrt(se_ind**2 + se_mom**2)
    cells = [
        {"estimator": "indicator", "n": len(ind), "mean": p_ind, "var": float(ind.var(ddof=1)), "se": se_ind, "failures": fail_ind},
        {"estimator": "moment", "n": len(rho0), "mean": p_mom, "var": float(mom.var(ddof=1)), "se": se_mom, "failures": fail_mom},
    ]
    summary = {
        "p_hat_indicator": p_ind,
        "p_hat_moment": p_mom,
        "se_indicator": se_ind,
        "se_moment": se_mom,
        "z_difference": (p_ind - p_mom) / comb if comb > 0 else math.nan,
        "certificate_failures": fail_ind + fail_mom,
        "window_extensions": int(sum(r[2] for r in res)),
    }
    return ExperimentReport(
        "pz",
        {"d": d, "reps": reps, "seed": seed, "Lmax": Lmax, "fence_width": w},
        ["estimator", "n", "mean", "var", "se", "failures"],
        cells,
        summary,
    )


# ------------------------------------------------------------------- tails


def _fit(x, p) -> dict:
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    ok = p > 0
    if ok.sum() < 2 or np.ptp(x[ok]) == 0:
        return {"slope": math.nan, "intercept": math.nan, "r2": math.nan, "points": int(ok.sum())}
    fit = stats.linregress(x[ok], np.log(p[ok]))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r2": float(fit.rvalue**2), "points": int(ok.sum())}


def tail_survey(
    d: int,
    thresholds,
    reps: int,
    seed: int,
    volume_thresholds=None,
    card_thresholds=None,
    L0: float | None = None,
    Lmax: float = 1024.0,
    certificate: str = "stopping",
    threads: int | None = None,
    keep_raw: bool = False,
) -> ExperimentReport:
    """Survival curves of the origin cluster's diameter, volume and cardinality."""
    grids = {
        "diameter": np.asarray(thresholds, dtype=float),
        "volume": np.asarray(volume_thresholds if volume_thresholds is not None else thresholds, dtype=float),
        "cardinality": np.asarray(card_thresholds if card_thresholds is not None else thresholds, dtype=float),
    }
    for name, g in grids.items():
        if len(g) == 0 or np.any(np.diff(g) <= 0):
            raise ValueError(f"{name} thresholds must be increasing")
    if L0 is None:
        L0 = 4.0 * fence_width(d) if certificate == "stopping" else 9.0
    r_grid = grids["diameter"]

    def one(i):
        sd = SeedSpec(seed, i)
        try:
            cs = exact_cluster_sample(d, sd, L0, Lmax, certificate)
        except CertificationError:
            return None
        phi = cs.config
        norms = np.linalg.norm(phi.points, axis=1)
        norms = norms[norms > 0]
        nearest = float(norms.min()) if len(norms) else math.inf
        return {
            "diameter": cs.stats.diameter,
            "volume": cs.stats.volume,
            "cardinality": cs.stats.cardinality,
            "nearest": nearest,
            "L": cs.L,
        }

    res = map_replicates(one, range(reps), threads)
    ok = [r for r in res if r is not None]
    failures = reps - len(ok)
    n = len(ok)
    vals = {k: np.array([r[k] for r in ok], dtype=float) for k in ("diameter", "volume", "cardinality", "nearest")}
    cells = []
    b = ball_volume(d)
    empty_ball_violations = 0
    for measure, grid in grids.items():
        for t in grid:
            k = int(np.sum(vals[measure] >= t))
            p = k / n if n else math.nan
            lo, hi = wilson_interval(k, n)
            row = {
                "measure": measure,
                "threshold": float(t),
                "n": n,
                "survival": p,
                "se": math.sqrt(p * (1 - p) / n) if n else math.nan,
                "wilson_lo": lo,
                "wilson_hi": hi,
                "upper_coord": float(t ** (d / (d + 1)) if measure == "diameter" else t ** (1 / (d + 1)) if measure == "volume" else t ** (d / (d + 1))),
                "lower_coord": float(t**d if measure == "diameter" else t if measure == "volume" else t**2),
                "envelope": math.nan,
                "envelope_ok": True,
            }
            if measure == "diameter":
                env = math.exp(-b * (2 * t) ** d)
                se0 = math.sqrt(env * (1 - env) / n) if n else math.nan
                row["envelope"] = env
                row["envelope_ok"] = bool(p + 3 * se0 >= env)
                empty = vals["nearest"] > 2 * t
                empty_ball_violations += int(np.sum(vals["diameter"][empty] < t))
            cells.append(row)
    fits = {}
    for measure in grids:
        rows = [c for c in cells if c["measure"] == measure]
        surv = [c["survival"] for c in rows]
        fits[measure] = {
            "monotone": bool(np.all(np.diff(surv) <= 0)),
            "upper": _fit([c["upper_coord"] for c in rows], surv),
            "lower": _fit([c["lower_coord"] for c in rows], surv),
        }
    summary = {
        "certified": n,
        "certificate_failures": failures,
        "empty_ball_violations": empty_ball_violations,
        "envelope_ok": bool(all(c["envelope_ok"] for c in cells)),
        "fits": fits,
    }
    columns = ["measure", "threshold", "n", "survival", "se", "wilson_lo", "wilson_hi", "upper_coord", "lower_coord", "envelope", "envelope_ok"]
    params = {"d": d, "reps": reps, "seed": seed, "L0": L0, "Lmax": Lmax, "certificate": certificate, "thresholds": {k: v.tolist() for k, v in grids.items()}}
    return ExperimentReport("tails", params, columns, cells, summary, ok if keep_raw else None)


# --------------------------------------------------------------------- CLT


def parse_functional(name: str, d: int):
    """``volume`` (g = b_d t^d), ``kappa``, ``const:c`` or ``power:p`` (g = t^p)."""
    if name == "volume":
        return "g", cl.volume_g(d)
    if name == "kappa":
        return "kappa", None
    if name.startswith("const:"):
        c = float(name.split(":", 1)[1])
        return "const", c
    if name.startswith("power:"):
        p = float(name.split(":", 1)[1])
        return "g", lambda t: np.asarray(t, dtype=float) ** p
    raise ValueError(f"unknown functional {name!r}")


def _functional_values(phi: Config, specs) -> list:
    n = len(phi)
    out = []
    rho = None
    for kind, arg in specs:
        if kind == "const":
            out.append(arg * n if n >= 2 else 0.0)
            continue
        if rho is None and n >= 2:
            rho = solve(phi)
        if kind == "kappa":
            out.append(float(cl.kappa(phi, rho)))
        else:
            out.append(cl.H_g(phi, rho, arg))
    return out


def clt_run(
    d: int,
    functionals,
    process: str,
    n_grid,
    reps: int,
    seed: int,
    shape: str = "cube",
    threads: int | None = None,
    keep_raw: bool = False,
    min_reps: int = 1000,
) -> ExperimentReport:
    """Replicate ``H(Phi_n)`` or ``H(chi_n)`` over a grid of window sizes."""
    if isinstance(functionals, str):
        functionals = [functionals]
    if process not in ("poisson", "binomial"):
        raise ValueError(f"unknown process {process!r}")
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be increasing")
    if reps < min_reps:
        raise ValueError(f"clt_run needs reps >= {min_reps}")
    specs = [parse_functional(f, d) for f in functionals]
    cells = []
    raw = []
    for gi, n in enumerate(n_grid):

        def one(i, n=n, gi=gi):
            sd = SeedSpec(seed, gi * 1_000_000_007 + i)
            if process == "poisson":
                phi = sample_poisson(Window(shape, n, d), sd)
            else:
                phi = sample_binomial(n, n, shape, d, sd)
            return _functional_values(phi, specs)

        vals = np.array(map_replicates(one, range(reps), threads), dtype=float).reshape(reps, len(specs))
        for fi, name in enumerate(functionals):
            v = vals[:, fi]
            var = float(v.var(ddof=1))
            mean = float(v.mean())
            if var > 0:
                z = (v - mean) / math.sqrt(var)
                ks = stats.kstest(z, "norm")
                ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)
                m4 = float(np.mean(z**4))
            else:
                ks_stat, ks_p, m4 = math.nan, math.nan, math.nan
            cells.append(
                {
                    "functional": name,
                    "n": n,
                    "reps": reps,
                    "mean": mean,
                    "var": var,
                    "var_over_n": var / n,
                    "se_mean": math.sqrt(var / reps),
                    "ks_stat": ks_stat,
                    "ks_pvalue": ks_p,
                    "ks_crit_01": float(stats.kstwo.ppf(0.99, reps)),
                    "fourth_moment": m4,
                }
            )
            if keep_raw:
                raw.extend({"functional": name, "n": n, "rep": i, "value": float(x)} for i, x in enumerate(v))
    ratios = {}
    for name in functionals:
        rows = [c for c in cells if c["functional"] == name]
        if len(rows) >= 2 and rows[-2]["var_over_n"] > 0:
            ratios[name] = rows[-1]["var_over_n"] / rows[-2]["var_over_n"]
        else:
            ratios[name] = math.nan
    columns = ["functional", "n", "reps", "mean", "var", "var_over_n", "se_mean", "ks_stat", "ks_pvalue", "ks_crit_01", "fourth_moment"]
    params = {"d": d, "functionals": list(functionals), "process": process, "n_grid": n_grid, "reps": reps, "seed": seed, "shape": shape}
    return ExperimentReport("clt", params, columns, cells, {"top_var_ratio": ratios}, raw if keep_raw else None)


# -------------------------------------------------------------- percolation


def _crossing_delta(phi: Config, radii: np.ndarray, window: Window, axis: int, grid) -> np.ndarray:
    return np.array([cl.face_crossing(phi, radii, float(dl), window, axis) for dl in grid], dtype=bool)


def _half_crossing(grid, probs) -> float:
    grid = np.asarray(grid, dtype=float)
    probs = np.asarray(probs, dtype=float)
    above = np.flatnonzero(probs >= 0.5)
    if len(above) == 0:
        return math.nan
    k = int(above[0])
    if k == 0:
        return float(grid[0])
    p0, p1 = probs[k - 1], probs[k]
    return float(grid[k - 1] + (0.5 - p0) * (grid[k] - grid[k - 1]) / (p1 - p0))


def percolation_sweep(
    d: int,
    delta_grid,
    window_scales,
    reps: int,
    seed: int,
    axis: int = 0,
    check_r: float = 2.5,
    threads: int | None = None,
) -> ExperimentReport:
    """Face-crossing probabilities of ``Z^delta`` on cube windows ``W_n``."""
    if d < 2:
        raise ValueError("no percolation transition for d = 1 (the critical enhancement is infinite there)")
    grid = np.asarray(delta_grid, dtype=float)
    if len(grid) == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("delta grid must be increasing and nonnegative")
    scales = [float(s) for s in window_scales]
    cells = []
    dc = {}
    violations = 0
    checks = 0
    assertion_failures = 0
    for si, n in enumerate(scales):
        window = Window("cube", n, d)

        def one(i, si=si, window=window):
            phi = sample_poisson(window, SeedSpec(seed, si * 1_000_000_007 + i))
            if len(phi) < 2:
                return np.zeros(len(grid), dtype=bool), 0, 0
            radii = solve(phi).radii
            cross = _crossing_delta(phi, radii, window, axis, grid)
            # blocking: below every gap near the centre, G at the centre forbids crossing
            n_check = n_fail = 0
            centre = np.zeros(d)
            if in_G(phi, centre, check_r):
                gap = min_gap(centre, phi, radii, check_r)
                for dl in grid[(grid < 0.5) & (2 * grid < gap)]:
                    n_check += 1
                    n_fail += int(cl.crossing(phi, radii, float(dl), centre, check_r))
            return cross, n_check, n_fail

        res = map_replicates(one, range(reps), threads)
        mat = np.array([r[0] for r in res])
        checks += sum(r[1] for r in res)
        assertion_failures += sum(r[2] for r in res)
        violations += int(np.sum(mat[:, 1:] < mat[:, :-1]))
        probs = mat.mean(axis=0)
        for dl, p, k in zip(grid, probs, mat.sum(axis=0)):
            lo, hi = wilson_interval(int(k), reps)
            cells.append({"scale": n, "side": window.size, "delta": float(dl), "reps": reps, "p_cross": float(p), "wilson_lo": lo, "wilson_hi": hi})
        dc[str(n)] = _half_crossing(grid, probs)
    summary = {
        "delta_c_hat": dc,
        "delta_c_label": "finite-size proxy: 0.5-crossing of the face-crossing probability",
        "monotonicity_violations": violations,
        "blocking_checks": checks,
        "blocking_violations": assertion_failures,
    }
    params = {"d": d, "delta_grid": grid.tolist(), "window_scales": scales, "reps": reps, "seed": seed, "axis": axis, "check_r": check_r}
    return ExperimentReport("perc", params, ["scale", "side", "delta", "reps", "p_cross", "wilson_lo", "wilson_hi"], cells, summary)


# ------------------------------------------------------------ renormalized field


@dataclass
class FieldSample:
    sites: np.ndarray
    centers: np.ndarray
    values: np.ndarray
    local_values: np.ndarray | None
    config: Config = field(repr=False)


def site_value(phi: Config, rho, center, r: float, delta: float) -> int:
    if not in_G(phi, center, r):
        return 0
    return int(min_gap(center, phi, rho, r) > delta)


def renormalized_field(d: int, r: float, delta: float, half_extent: int, seed: SeedSpec, check_locality: bool = False) -> FieldSample:
    """Site field ``Y_z`` on ``{-h..h}^d`` with box centres ``2 r d^{-1/2} z``."""
    if not r > 2 or not 0 < delta < 0.5:
        raise ValueError("need r > 2 and 0 < delta < 1/2")
    h = int(half_extent)
    spacing = 2 * r / math.sqrt(d)
    axes = [np.arange(-h, h + 1)] * d
    sites = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    centers = spacing * sites
    side = 2 * (h * spacing + 9 * r)
    phi = sample_poisson(Window.cube_of_side(side, d), seed)
    rho = solve(phi) if len(phi) >= 2 else None
    values = np.zeros(len(sites), dtype=np.int64)
    local = np.zeros(len(sites), dtype=np.int64) if check_locality else None
    for k, c in enumerate(centers):
        if rho is not None:
            values[k] = site_value(phi, rho, c, r, delta)
        if check_locality:
            sub = phi.restrict(c, 9 * r)
            local[k] = site_value(sub, solve(sub), c, r, delta) if len(sub) >= 2 else 0
    return FieldSample(sites, centers, values, local, phi)


def field_experiment(d: int, r: float, delta: float, half_extent: int, samples: int, seed: int, threads: int | None = None) -> ExperimentReport:
    """Replicated field with the long-range correlation estimate."""
    res = map_replicates(
        lambda i: renormalized_field(d, r, delta, half_extent, SeedSpec(seed, i), check_locality=True),
        range(samples),
        threads,
    )
    sites = res[0].sites
    Y = np.array([s.values for s in res], dtype=float)
    locality = int(sum(np.sum(s.values != s.local_values) for s in res))
    gdist = np.abs(sites[:, None, :] - sites[None, :, :]).sum(axis=2)
    far_i, far_j = np.nonzero(np.triu(gdist > 9 * d, 1))
    corr, se = far_correlation(Y, far_i, far_j)
    cells = [{"site": ",".join(map(str, z)), "mean": float(Y[:, k].mean())} for k, z in enumerate(sites.tolist())]
    summary = {
        "locality_mismatches": locality,
        "far_pairs": int(len(far_i)),
        "far_correlation": corr,
        "far_correlation_se": se,
        "mean_Y": float(Y.mean()),
    }
    params = {"d": d, "r": r, "delta": delta, "half_extent": half_extent, "samples": samples, "seed": seed}
    return ExperimentReport("field", params, ["site", "mean"], cells, summary)


def far_correlation(Y: np.ndarray, i: np.ndarray, j: np.ndarray) -> tuple:
    """Pooled correlation of ``(Y_i, Y_j)`` pairs and its jackknife SE over samples."""
    if len(i) == 0:
        return math.nan, math.nan

    def corr(rows):
        a = Y[rows][:, i].ravel()
        b = Y[rows][:, j].ravel()
        if a.std() == 0 or b.std() == 0:
            return 0.0
        return float(np.corrcoef(a, b)[0, 1])

    m = len(Y)
    full = corr(np.arange(m))
    if m < 2:
        return full, math.nan
    jack = np.array([corr(np.delete(np.arange(m), k)) for k in range(m)])
    se = math.sqrt((m - 1) / m * np.sum((jack - jack.mean()) ** 2))
    return full, se
