import math
import zlib

import numpy as np
import pytest

from uot_lab.core_math import Rng
from uot_lab.costs import IDENTITY, KL, CostSpec, DivergenceConj, cost, cost_grad_x, cost_grad_y, cost_matrix
from uot_lab.errors import CostDomainError, DivergenceError
from uot_lab.operators import AnalyticNonlinear, Blur1D, Downsample, HdrClip, Identity, Interp, Projection


def _fd_grad_x(spec, y, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (cost(spec, y, x + e) - cost(spec, y, x - e)) / (2 * h)
    return g


def test_identity_both_terms_example():
    spec = CostSpec(Identity(2), tau=1.0)
    assert cost(spec, [0.0, 0.0], [1.0, 1.0]) == 4.0


def test_exact_fit_without_quadratic_is_zero():
    spec = CostSpec(Projection(), tau=1.0, use_quadratic=False)
    assert cost(spec, [3.0, 0.0], [1.0, 2.0]) == 0.0


def test_cost_scales_linearly_in_tau():
    y, x = np.array([0.3, -0.1]), np.array([1.0, 0.5])
    base = cost(CostSpec(Projection(), tau=1.0), y, x)
    assert cost(CostSpec(Projection(), tau=0.001), y, x) == pytest.approx(0.001 * base, rel=1e-14)


def test_identity_op_likelihood_equals_quadratic():
    rng = Rng(4)
    y, x = rng.normal((10, 3)), rng.normal((10, 3))
    both = cost(CostSpec(Identity(3), 1.0), y, x)
    quad = cost(CostSpec(Identity(3), 1.0, use_likelihood=False), y, x)
    assert np.allclose(both, 2 * quad, rtol=1e-14)


def test_grad_x_examples():
    spec = CostSpec(Identity(2), tau=1.0)
    assert cost_grad_x(spec, [0.4, 0.4], [0.4, 0.4]).tolist() == [0.0, 0.0]
    quad = CostSpec(Identity(2), tau=1.0, use_likelihood=False)
    assert cost_grad_x(quad, [0.0, 0.0], [1.0, 1.0]).tolist() == [2.0, 2.0]


def _grad_cases():
    q = Interp(4, "cubic")
    return [
        ("identity", CostSpec(Identity(3), 0.7)),
        ("projection_lam2", CostSpec(Projection(), 1.0, quad_weight=2.0)),
        ("blur", CostSpec(Blur1D(16, 5, 1.0), 1.0)),
        ("blur_laplace", CostSpec(Blur1D(16, 5, 1.0), 1.0, likelihood="laplace")),
        ("blur_poisson", CostSpec(Blur1D(16, 5, 1.0), 1.0, likelihood="poisson")),
        ("downsample_interp", CostSpec(Downsample(16, 4), 1.0, interp=q)),
        ("hdr", CostSpec(HdrClip(8), 1.0)),
        ("nonlinear", CostSpec(AnalyticNonlinear(16), 1.0)),
    ]


@pytest.mark.parametrize("name,spec", _grad_cases(), ids=[c[0] for c in _grad_cases()])
def test_grad_x_matches_finite_differences(name, spec):
    rng = Rng(zlib.crc32(name.encode()))
    x = 0.8 * rng.uniform(spec.x_dim) - 0.4 + 0.01
    y = 0.9 * rng.uniform(spec.y_dim) - 0.45
    if spec.op.kind == "hdr_clip":
        # stay away from the kink |2x| = 1
        x = np.where(np.abs(np.abs(2 * x) - 1) < 1e-3, x * 0.9, x)
    if spec.likelihood == "laplace":
        # and away from zero residuals of the L1 term
        assert np.abs(spec.op.apply(x) - y).min() > 1e-4
    fd = _fd_grad_x(spec, y, x)
    analytic = cost_grad_x(spec, y, x)
    assert np.abs(analytic - fd).max() / np.abs(fd).max() < 1e-6


def test_grad_y_projection_example():
    spec = CostSpec(Projection(), tau=1.0, quad_weight=2.0)
    assert cost_grad_y(spec, [0.0, 0.0], [1.0, 0.0]).tolist() == [-6.0, 0.0]


def test_grad_y_fixed_point_is_zero():
    spec = CostSpec(Identity(2), tau=1.0)
    assert cost_grad_y(spec, [0.5, -0.5], [0.5, -0.5]).tolist() == [0.0, 0.0]


def test_grad_y_twist_failure_without_quadratic():
    # A(x1) == A(x2) so the likelihood term alone cannot tell them apart
    spec = CostSpec(Projection(), tau=1.0, use_quadratic=False)
    y = np.array([0.3, -1.2])
    assert np.array_equal(cost_grad_y(spec, y, [1.0, 0.0]), cost_grad_y(spec, y, [0.0, 1.0]))


def test_grad_y_matches_finite_differences():
    spec = CostSpec(Projection(), tau=0.5, quad_weight=1.5)
    rng = Rng(12)
    y, x = rng.normal(2), rng.normal(2)
    h = 1e-6
    fd = [(cost(spec, y + h * e, x) - cost(spec, y - h * e, x)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(cost_grad_y(spec, y, x), fd, rtol=1e-7)


def test_poisson_weights_on_pixel_scale():
    spec = CostSpec(Identity(1), tau=1.0, likelihood="poisson", use_quadratic=False)
    # y = 0 sits at 127.5 on the 0-255 scale; residual 0.2 is 25.5 pixels
    expected = 25.5**2 / (2 * 127.5)
    assert cost(spec, [0.0], [0.2]) == pytest.approx(expected, rel=1e-14)


def test_poisson_rejects_zero_counts():
    spec = CostSpec(Identity(2), tau=1.0, likelihood="poisson")
    with pytest.raises(CostDomainError):
        cost(spec, [-1.0, 0.5], [0.0, 0.0])


def test_cost_matrix_matches_pairwise():
    spec = CostSpec(Projection(), tau=0.3)
    rng = Rng(1)
    ys, xs = rng.normal((4, 2)), rng.normal((3, 2))
    m = cost_matrix(spec, ys, xs)
    assert m.shape == (4, 3)
    for i in range(4):
        for j in range(3):
            assert m[i, j] == cost(spec, ys[i], xs[j])


def test_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(Identity(2), tau=0.0)
    with pytest.raises(ValueError):
        CostSpec(Identity(2), use_likelihood=False, use_quadratic=False)
    with pytest.raises(ValueError):
        CostSpec(Identity(2), likelihood="cauchy")
    with pytest.raises(ValueError):
        CostSpec(Downsample(16, 4))  # quadratic term needs an interp
    with pytest.raises(ValueError):
        CostSpec(Identity(2), interp=Interp(2))
    with pytest.raises(ValueError):
        CostSpec(Downsample(16, 4), interp=Interp(2))
    with pytest.raises(ValueError):
        cost(CostSpec(Identity(2)), np.zeros((3, 2)), np.zeros((2, 2)))


def test_conjugate_examples():
    assert KL(0.0) == 0.0
    assert KL(1.0) == pytest.approx(math.e - 1, rel=1e-15)
    assert IDENTITY(-3.5) == -3.5
    assert KL.deriv(0.0) == 1.0 and IDENTITY.deriv(7.0) == 1.0
    assert DivergenceConj("kl") == KL and KL != IDENTITY
    with pytest.raises(ValueError):
        DivergenceConj("chi2")


def test_kl_conjugate_convex_and_increasing():
    rng = Rng(6)
    t1, t2 = 6 * rng.uniform(500) - 4, 6 * rng.uniform(500) - 4
    assert np.all(KL(t2) >= KL(t1) + KL.deriv(t1) * (t2 - t1) - 1e-12)
    order = np.argsort(t1)
    assert np.all(np.diff(KL(t1[order])) >= 0)


def test_conjugate_guards():
    with pytest.raises(DivergenceError):
        KL(np.array([0.0, 31.0]))
    with pytest.raises(DivergenceError):
        IDENTITY(np.nan)
    # the identity conjugate is affine and has no overflow to guard
    assert IDENTITY(100.0) == 100.0
