import numpy as np
import pytest

from lilypond.geometry import Config, GeometryError, Window
from lilypond.sampling import (
    NestedBallSampler,
    SeedSpec,
    add_point,
    remove_point,
    sample_binomial,
    sample_poisson,
)


def test_same_seed_same_config():
    w = Window("cube", 50, 2)
    a = sample_poisson(w, SeedSpec(7, 3))
    b = sample_poisson(w, SeedSpec(7, 3))
    assert np.array_equal(a.points, b.points)


def test_streams_differ():
    w = Window("cube", 50, 2)
    assert not np.array_equal(sample_poisson(w, SeedSpec(7, 3)).points, sample_poisson(w, SeedSpec(7, 4)).points)


@pytest.mark.parametrize("n", [50, 100, 200])
def test_poisson_count_mean_and_variance(n):
    w = Window("cube", n, 2)
    counts = np.array([int(SeedSpec(11, i).rng(0).poisson(w.volume)) for i in range(10_000)])
    assert abs(counts.mean() - n) < 3 * np.sqrt(n / 10_000)
    assert abs(counts.var() / n - 1) < 0.1
    # the sampler draws its count the same way
    assert len(sample_poisson(w, SeedSpec(11, 0))) == counts[0]


def test_tiny_window_is_empty():
    w = Window("cube", 1e-6, 2)
    assert sum(len(sample_poisson(w, SeedSpec(1, i))) for i in range(200)) <= 1


def test_stream_independence():
    w = Window("cube", 30, 1)
    a = np.array([len(sample_poisson(w, SeedSpec(5, 2 * i))) for i in range(1000)])
    b = np.array([len(sample_poisson(w, SeedSpec(5, 2 * i + 1))) for i in range(1000)])
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1


@pytest.mark.parametrize("shape", ["cube", "ball"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_binomial_points_in_window(shape, d):
    phi = sample_binomial(40, 40, shape, d, SeedSpec(3))
    assert len(phi) == 40
    assert np.all(Window(shape, 40, d).contains(phi.points))


def test_binomial_edge_counts():
    assert len(sample_binomial(10, 0, "cube", 2, SeedSpec(1))) == 0
    assert len(sample_binomial(10, 5, "cube", 2, SeedSpec(1))) == 5


def test_add_and_remove_point():
    empty = Config(np.zeros((0, 2)), dim=2)
    assert add_point(empty, [0.0, 0.0]).points.tolist() == [[0.0, 0.0]]
    phi = sample_poisson(Window("cube", 20, 2), SeedSpec(2))
    back = remove_point(add_point(phi, [0.123, 0.456]), [0.123, 0.456])
    assert np.array_equal(back.points, phi.points)
    with pytest.raises(GeometryError):
        add_point(phi, phi.points[0])


def test_nested_sampler_keeps_inner_points():
    s = NestedBallSampler(2, SeedSpec(9, 1), 4.0)
    inner = s.points.copy()
    s.extend()
    assert s.L == 8.0
    assert np.array_equal(s.points[: len(inner)], inner)
    norms = np.linalg.norm(s.points[len(inner) :], axis=1)
    assert np.all((norms >= 4.0) & (norms <= 8.0))


def test_nested_sampler_count_matches_ball():
    # the extended sample is Poisson on the larger ball
    counts = []
    for i in range(2000):
        s = NestedBallSampler(2, SeedSpec(4, i), 2.0)
        s.extend()
        counts.append(len(s.points))
    lam = np.pi * 16
    assert abs(np.mean(counts) - lam) < 3 * np.sqrt(lam / 2000)
