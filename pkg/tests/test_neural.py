import numpy as np
import pytest

from models.schemas import BenchmarkId, BnbOptions, OptimizerKind, ReluNet1, TrainConfig
from services.bnb import solve_one_knot
from services.funcs import TABLE_BIG_M, benchmark_data
from services.neural import (
    Adam,
    Adamax,
    DivergenceError,
    chebyshev_loss,
    extract_knots,
    forward,
    init_net,
    loss_subgradient,
    train,
)
from tests.conftest import make_data

FD_STEP = 1e-6


def _net(params: np.ndarray, n: int) -> ReluNet1:
    return ReluNet1(w1=tuple(params[:n]), b1=tuple(params[n:2 * n]), w2=tuple(params[2 * n:3 * n]),
                    b2=float(params[3 * n]))


def _smooth_config(seed: int):
    """Random net and data with one dominant residual and no hidden node at its kink there."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    t = np.linspace(-1.0, 1.0, 9)
    w1, b1, w2 = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    b2 = float(rng.normal())
    j = int(rng.integers(0, t.size))
    z = w1 * t[j] + b1
    b1 = b1 + np.where(np.abs(z) < 0.1, 0.2, 0.0)
    params = np.concatenate([w1, b1, w2, [b2]])
    out = forward(_net(params, n), t)
    f = out + rng.uniform(-0.1, 0.1, size=t.size)
    f[j] = out[j] + rng.choice([-3.0, 3.0])
    return params, n, make_data(t, f)


class TestForward:
    def test_scalar_and_array(self):
        net = ReluNet1(w1=(1.0, -1.0), b1=(0.0, 0.0), w2=(1.0, 1.0), b2=0.5)
        assert forward(net, -0.25) == pytest.approx(0.75)
        np.testing.assert_allclose(forward(net, np.array([[-1.0, 2.0]])), [[1.5, 2.5]])

    def test_loss_is_max_abs_residual(self, abs_data):
        net = ReluNet1(w1=(1.0,), b1=(0.0,), w2=(1.0,), b2=0.0)
        # relu(t) misses |t| by 1 at t = -1
        assert chebyshev_loss(net, abs_data) == pytest.approx(1.0)


class TestSubgradient:
    @pytest.mark.parametrize("seed", range(100))
    def test_matches_finite_differences(self, seed):
        params, n, data = _smooth_config(seed)
        grad = loss_subgradient(_net(params, n), data)
        fd = np.empty_like(params)
        for k in range(params.size):
            step = np.zeros_like(params)
            step[k] = FD_STEP
            up = chebyshev_loss(_net(params + step, n), data)
            down = chebyshev_loss(_net(params - step, n), data)
            fd[k] = (up - down) / (2 * FD_STEP)
        scale = max(1.0, float(np.max(np.abs(grad))))
        np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-4 * scale)

    def test_ordering(self, samples):
        # single point t = 0.5, f = 0: residual relu(0.5) = 0.5 > 0
        net = ReluNet1(w1=(1.0,), b1=(0.0,), w2=(1.0,), b2=0.0)
        grad = loss_subgradient(net, samples([0.0, 0.5], [0.0, 0.0]))
        np.testing.assert_allclose(grad, [0.5, 1.0, 0.5, 1.0])


class TestOptimizers:
    def test_adam_first_step_moves_by_learning_rate(self):
        opt = Adam(2, 0.1, 0.9, 0.999, 1e-8)
        theta = opt.step(np.zeros(2), np.array([2.0, -3.0]))
        np.testing.assert_allclose(theta, [-0.1, 0.1], rtol=1e-6)

    def test_adamax_first_step_moves_by_learning_rate(self):
        opt = Adamax(2, 0.1, 0.9, 0.999, 1e-8)
        theta = opt.step(np.zeros(2), np.array([2.0, -3.0]))
        np.testing.assert_allclose(theta, [-0.1, 0.1], rtol=1e-6)

    def test_adamax_keeps_largest_gradient(self):
        opt = Adamax(1, 0.1, 0.9, 0.999, 1e-8)
        opt.step(np.zeros(1), np.array([4.0]))
        opt.step(np.zeros(1), np.array([1.0]))
        assert opt.v[0] == pytest.approx(0.999 * 4.0)


class TestTraining:
    def test_init_is_seeded(self):
        assert init_net(3, seed=5) == init_net(3, seed=5)
        assert init_net(3, seed=5) != init_net(3, seed=6)
        assert init_net(2).b1 == (0.0, 0.0)

    @pytest.mark.parametrize("optimizer", list(OptimizerKind))
    def test_bit_deterministic(self, coarse_f1, optimizer):
        cfg = TrainConfig(epochs=30, seed=3, optimizer=optimizer)
        net_a, hist_a = train(init_net(1, 3), coarse_f1, cfg)
        net_b, hist_b = train(init_net(1, 3), coarse_f1, cfg)
        assert net_a == net_b
        assert hist_a.loss_per_epoch == hist_b.loss_per_epoch

    def test_history_length(self, coarse_f1):
        _, history = train(init_net(), coarse_f1, TrainConfig(epochs=12))
        assert len(history.loss_per_epoch) == 12
        assert history.final_loss == history.loss_per_epoch[-1]
        assert history.best_so_far == sorted(history.best_so_far, reverse=True)

    def test_zero_epochs_keeps_start(self, coarse_f1):
        net0 = init_net(1, 2)
        net, history = train(net0, coarse_f1, TrainConfig(epochs=0))
        assert net == net0
        assert history.loss_per_epoch == []
        assert history.final_loss == pytest.approx(chebyshev_loss(net0, coarse_f1))

    @pytest.mark.parametrize("optimizer", list(OptimizerKind))
    def test_network_never_beats_solver(self, coarse_f1, optimizer):
        report = solve_one_knot(coarse_f1, BnbOptions(M_override=300.0))
        _, history = train(init_net(1, 0), coarse_f1, TrainConfig(epochs=50, optimizer=optimizer))
        assert min(history.loss_per_epoch) >= report.objective - 1e-6

    @pytest.mark.parametrize("fn", [BenchmarkId.F2, BenchmarkId.F4, BenchmarkId.F5])
    def test_lower_bound_on_other_benchmarks(self, fn):
        data = benchmark_data(fn, h=0.1)
        report = solve_one_knot(data, BnbOptions(M_override=TABLE_BIG_M[fn]))
        for optimizer in OptimizerKind:
            net, history = train(init_net(1, 5), data, TrainConfig(epochs=40, optimizer=optimizer))
            assert min(history.loss_per_epoch) >= report.objective - 1e-6
            assert chebyshev_loss(net, data) >= report.objective - 1e-6

    def test_overflow_raises_divergence(self, abs_data):
        net0 = ReluNet1(w1=(1.0,), b1=(1.0,), w2=(1e308,), b2=0.0)
        with pytest.raises(DivergenceError) as excinfo:
            train(net0, abs_data, TrainConfig(epochs=5))
        assert excinfo.value.epoch == 1


class TestExtractKnots:
    def test_interior_live_nodes_only(self):
        net = ReluNet1(w1=(2.0, -1.0, 0.0, 1.0), b1=(1.0, 0.5, 3.0, -2.0), w2=(1.0,) * 4, b2=0.0)
        assert extract_knots(net, -1.0, 1.0) == pytest.approx([-0.5, 0.5])

    def test_coincident_knots_merge(self):
        net = ReluNet1(w1=(1.0, 2.0), b1=(0.3, 0.6), w2=(1.0, -1.0), b2=0.0)
        assert extract_knots(net, -1.0, 1.0) == pytest.approx([-0.3])

    def test_endpoint_knot_dropped(self):
        net = ReluNet1(w1=(1.0,), b1=(1.0,), w2=(1.0,), b2=0.0)
        assert extract_knots(net, -1.0, 1.0) == []
