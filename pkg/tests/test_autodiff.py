import numpy as np
import pytest

from circumtri.autodiff import Tensor, parameter, sigmoid


def finite_diff(f, x, eps=1e-6):
    """Central-difference gradient oracle over a flat float64 array."""
    g = np.zeros_like(x.reshape(-1))
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g.reshape(x.shape)


def check_op(build, *shapes, seed=0, tol=1e-6):
    """Compare analytic gradients of scalar-valued `build(*tensors)` to FD."""
    rng = np.random.default_rng(seed)
    params = [parameter(rng.normal(size=s)) for s in shapes]
    out = build(*params)
    out.backward()
    for p in params:
        fd = finite_diff(lambda: float(build(*params).data), p.data)
        assert np.allclose(p.grad, fd, rtol=tol, atol=tol), (p.grad, fd)


class TestOps:
    def test_add_broadcast(self):
        check_op(lambda a, b: (a + b).sum(), (3, 4), (4,))

    def test_mul_broadcast(self):
        check_op(lambda a, b: (a * b).sum(), (2, 3, 4), (3, 4))

    def test_sub_and_neg(self):
        check_op(lambda a, b: (a - b * 2.0).sum(), (5,), (5,))

    def test_matmul_2d(self):
        check_op(lambda a, b: (a @ b).sum(), (3, 4), (4, 2))

    def test_matmul_stacked_times_matrix(self):
        check_op(lambda a, b: (a @ b).sum(), (2, 5, 3), (3, 4))

    def test_relu(self):
        check_op(lambda a: a.relu().sum(), (10,), seed=3)

    def test_softplus(self):
        check_op(lambda a: a.softplus().sum(), (12,))
        big = Tensor(np.array([500.0, -500.0]))
        out = big.softplus()
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(500.0)
        assert out.data[1] == pytest.approx(0.0, abs=1e-12)

    def test_clip_gradient_gates(self):
        x = parameter(np.array([-2.0, 0.5, 2.0]))
        x.clip(-1, 1).sum().backward()
        assert x.grad.tolist() == [0.0, 1.0, 0.0]

    def test_smooth_l1_values_and_grad(self):
        x = parameter(np.array([0.25, -0.5, 1.0, -3.0]))
        out = x.smooth_l1()
        assert np.allclose(out.data, [0.03125, 0.125, 0.5, 2.5])
        check_op(lambda a: a.smooth_l1().sum(), (9,), seed=5)

    def test_take_gathers_and_scatters(self):
        x = parameter(np.arange(12.0).reshape(3, 4))
        picked = x.take([0, 5, 5, 11])
        assert picked.data.tolist() == [0, 5, 5, 11]
        picked.sum().backward()
        expected = np.zeros(12)
        expected[[0, 11]] = 1
        expected[5] = 2
        assert np.array_equal(x.grad.reshape(-1), expected)

    def test_tile_last(self):
        check_op(lambda a: (a.tile_last(3) * 1.5).sum(), (2, 4))

    def test_reshape_and_mean(self):
        check_op(lambda a: a.reshape(6).mean(), (2, 3))

    def test_sum_axis(self):
        check_op(lambda a: (a.sum(axis=1) * a.sum(axis=0).sum()).sum(), (3, 4))

    def test_composite_expression(self):
        def f(a, b, c):
            h = (a @ b).relu()
            return ((h * h) @ c).softplus().mean()
        check_op(f, (4, 3), (3, 5), (5, 2), seed=7)

    def test_diamond_graph_accumulates(self):
        x = parameter(np.array([2.0]))
        y = x * x        # x^2
        z = y + y        # 2 x^2 -> dz/dx = 4x = 8
        z.sum().backward()
        assert x.grad[0] == pytest.approx(8.0)

    def test_backward_requires_scalar(self):
        x = parameter(np.ones(3))
        with pytest.raises(ValueError):
            (x * 2).backward()


class TestSigmoid:
    def test_stable_at_extremes(self):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        assert out[0] == 0.0
        assert out[1] == 0.5
        assert out[2] == 1.0

    def test_matches_naive_in_safe_range(self):
        x = np.linspace(-30, 30, 101)
        assert np.allclose(sigmoid(x), 1 / (1 + np.exp(-x)), rtol=1e-12)
