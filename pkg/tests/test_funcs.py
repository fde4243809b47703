import math

import numpy as np
import pytest
from pydantic import ValidationError

from models.schemas import BenchmarkId, Grid
from services.funcs import (
    BENCHMARKS,
    TABLE_BIG_M,
    GridError,
    benchmark_data,
    grid_from_points,
    make_grid,
    sample,
)


class TestMakeGrid:
    def test_reference_grid_has_2001_points(self):
        grid = make_grid(-1.0, 1.0, 1e-3)
        assert grid.size == 2001
        assert grid.points[0] == -1.0
        assert grid.points[-1] == 1.0
        assert grid.uniform

    def test_points_strictly_increasing(self):
        grid = make_grid(0.0, 1.0, 0.1)
        assert np.all(np.diff(grid.points) > 0)
        assert grid.size == 11

    def test_last_point_clamped_to_d(self):
        grid = make_grid(-1.0, 1.0, 0.3)
        assert grid.points[-1] == 1.0

    @pytest.mark.parametrize("c,d,h", [(1.0, 0.0, 0.1), (0.0, 1.0, 0.0), (0.0, 1.0, -0.1), (0.0, 1.0, 2.0),
                                       (0.0, math.inf, 0.1)])
    def test_invalid_parameters(self, c, d, h):
        with pytest.raises(GridError):
            make_grid(c, d, h)

    def test_grid_is_read_only(self):
        grid = make_grid(0.0, 1.0, 0.25)
        with pytest.raises(ValueError):
            grid.points[0] = 5.0


class TestGridFromPoints:
    def test_non_uniform_points_flagged(self):
        grid = grid_from_points([0.0, 0.1, 0.5, 1.0])
        assert not grid.uniform
        assert grid.c == 0.0 and grid.d == 1.0

    def test_uniform_points_detected(self):
        grid = grid_from_points(np.linspace(0.0, 1.0, 5))
        assert grid.uniform
        assert grid.h == pytest.approx(0.25)

    def test_repeated_abscissa_rejected(self):
        with pytest.raises(GridError):
            grid_from_points([0.0, 0.5, 0.5, 1.0])

    def test_grid_model_rejects_wrong_endpoints(self):
        with pytest.raises(ValidationError):
            Grid(c=0.0, d=1.0, h=0.5, points=[0.0, 0.5, 0.9])


class TestSample:
    def test_benchmark_values(self):
        data = benchmark_data("f1", h=0.25)
        assert data.label == "f1"
        np.testing.assert_allclose(data.f, np.sqrt(np.abs(data.t)))

    def test_f4_is_cubic(self):
        data = benchmark_data(BenchmarkId.F4, h=0.5)
        np.testing.assert_allclose(data.f, data.t**3 - 3 * data.t**2 + 2)

    def test_f5_is_finite_on_reference_grid(self):
        data = benchmark_data("f5", h=1e-3)
        assert np.all(np.isfinite(data.f))
        # spike near the pole of 1/(t^25 + 1/2)
        assert np.max(np.abs(data.f)) > 100

    def test_unknown_benchmark(self):
        with pytest.raises(GridError):
            sample("f9", make_grid(0.0, 1.0, 0.5))

    def test_custom_scalar_evaluator(self):
        grid = make_grid(0.0, 1.0, 0.25)
        data = sample(lambda t: math.exp(t), grid, label="exp")
        np.testing.assert_allclose(data.f, np.exp(grid.points))
        assert data.label == "exp"

    def test_non_finite_value_reported_with_position(self):
        grid = make_grid(-1.0, 1.0, 0.5)
        with pytest.raises(GridError, match="index 2"):
            sample(lambda t: 1.0 / t, grid, label="inverse")

    def test_every_benchmark_has_reference_big_m(self):
        assert set(TABLE_BIG_M) == set(BENCHMARKS) == set(BenchmarkId)
