import math

import numpy as np
import pytest
from hypothesis import given, settings

from lilypond.geometry import Config, Window
from lilypond.model import solve
from lilypond.stabilization import (
    FenceError,
    external_radius,
    fence_cover,
    in_E_r,
    in_fence,
    in_G,
    in_U_r,
    is_descending_chain,
    min_gap,
    s_star,
    stab_radius,
    stopping_set,
    stopping_set_within,
)

from . import mc_checks as L
from .helpers import distinct_points, poisson_ball


def cfg(*xs):
    return Config(np.array(xs, dtype=float)[:, None])


def test_descending_chain_examples():
    phi = cfg(2, 3, 5)
    assert is_descending_chain([[5], [3], [2]], phi)
    assert not is_descending_chain([[2], [3], [5]], phi)
    assert is_descending_chain([[2], [5]], phi)
    assert not is_descending_chain([[2], [7]], phi)
    with pytest.raises(ValueError):
        is_descending_chain([[2]], phi)


@pytest.mark.parametrize("xs", [(1, 3), (-1, 1)])
def test_stopping_set_examples(xs):
    S = stopping_set([0.0], cfg(*xs))
    assert S.base_radius == 2.0
    assert S.enclosing_radius == 2.0
    assert stab_radius(cfg(*xs)) == 2.0
    inside = S.contains(np.array([[-2.0], [2.0], [0.0]]))
    assert inside.all()
    assert not S.contains(np.array([[2.01], [-2.01]])).any()


def test_stopping_set_whole_space():
    S = stopping_set([0.0], cfg(0.0))
    assert S.whole_space and math.isinf(S.enclosing_radius)
    assert stab_radius(Config(np.zeros((0, 2)), dim=2)) == math.inf


def test_stopping_set_centers_are_points():
    phi = poisson_ball(2, 4.0, 3)
    S = stopping_set([0.0, 0.0], phi)
    assert all(phi.index_of(c) >= 0 for c in S.centers)
    far = np.linalg.norm(S.centers - S.anchor, axis=1) + S.radii
    assert S.enclosing_radius == max(S.base_radius, far.max())


def test_within_matches_enclosing_radius():
    phi = poisson_ball(2, 5.0, 8)
    S = stopping_set([0.0, 0.0], phi)
    R = S.enclosing_radius
    assert stopping_set_within([0.0, 0.0], phi, [0.0, 0.0], R * 1.0001)
    assert not stopping_set_within([0.0, 0.0], phi, [0.0, 0.0], R)


def test_chain_corpus_small():
    assert L.check_chain_corpus(300, seed=1)["violations"] == 0


@pytest.mark.parametrize("d", [1, 2, 3])
def test_stability_and_localization_small(d):
    assert L.check_stopping_stability(d, 30, seed=2)["violations"] == 0
    assert L.check_localization(d, 30, seed=2)["violations"] == 0


def test_fence_d1():
    f = fence_cover([0.0], 3.0, 1.0)
    assert f.k == 2
    assert sorted(f.points[:, 0]) == [-3.0, 3.0]


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("lam", [2.0, 10.0])
def test_fence_scale_invariance(d, lam):
    x = np.zeros(d)
    assert fence_cover(x, lam * 4.0, lam * 1.0).k == fence_cover(x, 4.0, 1.0).k


def _arcs_cover_circle(theta, half):
    th = np.sort(np.mod(theta, 2 * math.pi))
    gaps = np.diff(np.append(th, th[0] + 2 * math.pi))
    return bool(np.all(gaps < 2 * half))


def test_fence_d2_arc_oracle():
    f = fence_cover([0.0, 0.0], 2.0, 1.0)
    assert f.k >= math.ceil(2 * math.pi / (4 * math.asin(1.0 / 4.0)))
    theta = np.arctan2(f.points[:, 1], f.points[:, 0])
    assert _arcs_cover_circle(theta, 2 * math.asin(1.0 / 4.0))
    np.testing.assert_allclose(np.linalg.norm(f.points, axis=1), 2.0)


def test_fence_d3_dense_coverage():
    f = fence_cover(np.zeros(3), 3.0, 1.0)
    g = np.random.default_rng(0).standard_normal((20000, 3))
    probe = 3.0 * g / np.linalg.norm(g, axis=1, keepdims=True)
    dist = np.linalg.norm(probe[:, None, :] - f.points[None], axis=2).min(axis=1)
    assert dist.max() < 1.0


def test_fence_windowed_subset():
    w = Window.cube_of_side(10.0, 2)
    f = fence_cover([4.0, 0.0], 3.0, 1.0, window=w)
    assert len(f.windowed_points) <= f.k
    assert 0 < len(f.windowed_points) < f.k


def test_fence_bad_args():
    with pytest.raises(ValueError):
        fence_cover([0.0], 1.0, 2.0)


def test_in_fence_examples():
    f = fence_cover([0.0], 3.0, 1.0)
    assert in_fence(cfg(3.1, 3.3, -3.1, -3.3), f)
    assert in_fence(cfg(0.0, 3.1, 3.3, -3.1, -3.3, 9.0), f)
    assert not in_fence(cfg(3.1, -3.1, -3.3), f)
    assert not in_fence(Config(np.zeros((0, 1)), dim=1), f)
    f.cover_certified = False
    with pytest.raises(FenceError):
        in_fence(cfg(3.1, 3.3, -3.1, -3.3), f)


def test_E_r_examples():
    assert in_E_r(cfg(50.0, 51.0), [0.0], 1.0)
    # isolated point: R >= 2D >= r
    assert not in_E_r(cfg(0.0, 0.7, 20.0), [0.0], 1.0)
    # pairs 0.2 apart, 0.5 between pairs: every stopping set is its own pair
    left = np.arange(-12.6, 12.7, 0.7)
    pairs = cfg(*np.concatenate([left, left + 0.2]))
    assert in_E_r(pairs, [0.0], 1.0)
    assert not in_E_r(cfg(*np.arange(-12.0, 12.01, 0.1)), [0.0], 1.0)


def test_E_r_matches_translated_stab_radius():
    phi = poisson_ball(1, 40.0, 4)
    for r in (1.0, 2.0, 4.0):
        ys = phi.points[np.abs(phi.points[:, 0]) <= 8 * r]
        want = all(stab_radius(phi.translate(-y)) < r for y in ys)
        assert in_E_r(phi, [0.0], r) == want


def test_U_r_examples():
    assert not in_U_r(cfg(0.0, 1.0, 2.0), [0.0], 1.0)
    assert in_U_r(cfg(0.0, 1.0), [0.0], 1.0)
    assert in_U_r(poisson_ball(2, 3.0, 5), [0.0, 0.0], 1.0)


def test_G_empty_false():
    assert not in_G(Config(np.zeros((0, 1)), dim=1), [0.0], 1.0)
    assert not in_G(cfg(0.0, 1.0, 2.0), [0.0], 1.0)
    assert external_radius(Config(np.zeros((0, 2)), dim=2), r_cap=3) == math.inf
    with pytest.raises(ValueError):
        external_radius(cfg(0.0, 1.0), r_cap=0)


def test_G_windowed_needs_window():
    with pytest.raises(ValueError):
        in_G(cfg(0.0, 1.0), [0.0], 1.0, windowed=True)


def test_external_radius_from_G():
    acc, _ = L.g_samples(3)
    for pts, _, _ in acc[:2]:
        phi = Config(pts, check=False)
        rex = external_radius(phi, r_cap=30)
        assert rex <= 9 * 30
        assert in_G(phi, [0.0], rex / 9)


def test_min_gap_examples():
    phi = cfg(0.0, 1.0, 3.0)
    assert min_gap([0.0], phi, solve(phi), 10.0) == pytest.approx(1.0, abs=1e-12)
    phi = cfg(0.0, 1.0, 2.0)
    assert min_gap([0.0], phi, solve(phi), 10.0) == pytest.approx(1.0, abs=1e-12)
    phi = cfg(0.0, 1.0)
    assert min_gap([0.0], phi, solve(phi), 10.0) == math.inf
    assert min_gap([0.0], cfg(0.0, 100.0), [50.0, 50.0], 1.0) == math.inf


def test_min_gap_brute_force():
    phi = poisson_ball(2, 6.0, 11)
    rho = solve(phi).radii
    p = phi.points
    dist = np.linalg.norm(p[:, None] - p[None], axis=2)
    gap = dist - rho[:, None] - rho[None]
    iu = np.triu_indices(len(p), 1)
    g = gap[iu]
    want = g[g > 1e-9 * (1 + dist[iu])].min()
    assert min_gap([0.0, 0.0], phi, rho, 1.0) == pytest.approx(want, rel=1e-12)


def test_s_star_empty_and_single():
    U = s_star(cfg(0.1, 0.2, 50.0), 1.0)
    assert U.empty
    phi = cfg(0.0, 0.5, 3.0, 20.0, 21.0)
    U = s_star(phi, 1.0)
    S = stopping_set([3.0], phi)
    probe = np.linspace(-10, 30, 4001)[:, None]
    assert np.array_equal(U.contains(probe), S.contains(probe))


@settings(max_examples=25, deadline=None)
@given(distinct_points(2, 3, 10))
def test_s_star_is_union(phi):
    r = 0.5
    U = s_star(phi, r)
    norms = np.linalg.norm(phi.points, axis=1)
    idx = np.flatnonzero((norms > 2 * r) & (norms <= 7 * r))
    probe = np.random.default_rng(0).uniform(-12, 12, (500, 2))
    want = np.zeros(len(probe), dtype=bool)
    for k in idx:
        want |= stopping_set(phi.points[k], phi).contains(probe)
    assert np.array_equal(U.contains(probe), want)


def test_blocking_lemmas_small():
    assert L.check_fence_blocking(2, 20, seed=3)["violations"] == 0
    assert L.check_two_fences(2, 20, seed=3)["violations"] == 0
    assert L.check_two_fences(2, 10, seed=3, window_shape="ball")["violations"] == 0
    assert L.check_insulation(1, 20, seed=3)["violations"] == 0
    assert L.check_insulation(1, 10, seed=3, window_shape="cube")["violations"] == 0


def test_g_lemmas_small():
    assert L.check_external_stabilization(10)["violations"] == 0
    assert L.check_cluster_containment(10)["violations"] == 0
    assert L.check_no_crossing(10)["violations"] == 0
    assert L.check_G_locality(10)["violations"] == 0
