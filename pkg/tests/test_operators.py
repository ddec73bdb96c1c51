import numpy as np
import pytest

from uot_lab.core_math import Rng
from uot_lab.operators import (
    OPERATOR_KINDS,
    AnalyticNonlinear,
    Blur1D,
    Downsample,
    HdrClip,
    Identity,
    Interp,
    LinearMatrix,
    Projection,
    build_operator,
    circulant,
    gaussian_kernel,
)


def test_projection_apply():
    assert Projection().apply([1.0, 2.0]).tolist() == [3.0, 0.0]


def test_hdr_clip_scalar():
    assert HdrClip(dim=1).apply([0.7]).tolist() == [1.0]
    assert HdrClip(dim=3).apply([0.2, -0.9, 0.5]).tolist() == [0.4, -1.0, 1.0]


def test_gaussian_kernel_three_taps():
    k = gaussian_kernel(3, 1.0)
    assert np.allclose(k, [0.2741, 0.4519, 0.2741], atol=5e-5)
    w = np.exp(-np.array([1.0, 0.0, 1.0]) / 2)
    assert np.allclose(k, w / w.sum(), rtol=0, atol=1e-15)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        Projection().apply([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        Identity(2).jacobian_transpose_apply([1.0, 2.0], [1.0])


def test_jacobian_transpose_examples():
    u = np.array([0.3, -0.2])
    assert Identity(2).jacobian_transpose_apply([5.0, 6.0], u).tolist() == u.tolist()
    assert Projection().jacobian_transpose_apply([0.0, 0.0], [1.0, 0.0]).tolist() == [1.0, 1.0]


def test_hdr_clip_subgradient_masks_boundary():
    op = HdrClip(dim=4)
    x = np.array([0.1, 0.5, -0.5, 0.9])
    assert op.jacobian_transpose_apply(x, np.ones(4)).tolist() == [2.0, 0.0, 0.0, 0.0]


def _directional_fd(op, x, u, d, h=1e-6):
    return (u @ op.apply(x + h * d) - u @ op.apply(x - h * d)) / (2 * h)


@pytest.mark.parametrize("seed", range(5))
def test_analytic_nonlinear_jt_matches_finite_differences(seed):
    rng = Rng(seed)
    op = AnalyticNonlinear(dim=16)
    x, u, d = rng.normal(16), rng.normal(16), rng.normal(16)
    fd = _directional_fd(op, x, u, d)
    analytic = op.jacobian_transpose_apply(x, u) @ d
    assert abs(analytic - fd) / abs(fd) < 1e-5


def _linear_ops():
    rng = Rng(77)
    return [
        Identity(5),
        LinearMatrix(rng.normal((3, 7))),
        Projection(),
        Blur1D(dim=32),
        Blur1D(dim=16, kernel_size=5, sigma=0.8),
        Downsample(dim=32, factor=4),
    ]


@pytest.mark.parametrize("op", _linear_ops(), ids=lambda o: o.kind)
def test_adjoint_identity(op):
    rng = Rng(3)
    x = rng.normal(op.in_dim)
    u = rng.normal(op.out_dim)
    lhs = op.apply(x) @ u
    rhs = x @ op.jacobian_transpose_apply(x, u)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("op", _linear_ops(), ids=lambda o: o.kind)
def test_lipschitz_matches_svd(op):
    dense = np.linalg.svd(op.matrix, compute_uv=False)[0]
    assert abs(op.lipschitz_estimate(rng=Rng(1)) - dense) < 1e-8


def test_lipschitz_examples():
    assert Projection().lipschitz_estimate(rng=Rng(0)) == pytest.approx(np.sqrt(2), abs=1e-8)
    assert Identity(3).lipschitz_estimate(rng=Rng(0)) == pytest.approx(1.0, abs=1e-12)
    assert HdrClip(dim=4).lipschitz_estimate(2000, Rng(0)) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(ValueError):
        Identity(2).lipschitz_estimate(0)


def test_nonlinear_lipschitz_is_lower_bound():
    op = AnalyticNonlinear(dim=16)
    est = op.lipschitz_estimate(500, Rng(2))
    assert 0 < est <= op.s + op.kappa + 1e-12


def test_blur_preserves_constants():
    op = Blur1D(dim=64)
    assert np.allclose(op.apply(np.full(64, 0.3)), 0.3, rtol=0, atol=1e-15)
    assert op.kernel.sum() == pytest.approx(1.0, abs=1e-15)


def test_circulant_wraps_around():
    m = circulant([1.0, 2.0, 3.0], 4)
    # row 0 picks x[-1], x[0], x[1]
    assert m[0].tolist() == [2.0, 3.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        circulant(np.ones(5), 3)


def test_downsample_block_average_and_divisibility():
    op = Downsample(dim=8, factor=4)
    assert op.apply(np.arange(8.0)).tolist() == [1.5, 5.5]
    with pytest.raises(ValueError):
        Downsample(dim=10, factor=4)


@pytest.mark.parametrize("mode", ["cubic", "linear"])
def test_interp_reproduces_constants(mode):
    q = Interp(4, mode)
    x = np.full(64, -0.4)
    down = Downsample(64, 4).apply(x)
    assert np.array_equal(q.down(x), down)
    up = q.up(down)
    assert up.shape == x.shape
    assert np.allclose(up, x, rtol=0, atol=1e-15)


def test_interp_transpose_is_adjoint():
    q = Interp(4, "cubic")
    rng = Rng(8)
    y, u = rng.normal(16), rng.normal(64)
    assert q.up(y) @ u == pytest.approx(y @ q.up_transpose(u, 16), rel=1e-12)


def test_interp_rejects_bad_arguments():
    with pytest.raises(ValueError):
        Interp(0)
    with pytest.raises(ValueError):
        Interp(2, "nearest")


def test_build_operator_roundtrip_through_config():
    for op in [Identity(3), Projection(), Blur1D(16, 5, 1.0), Downsample(16, 2), HdrClip(8), AnalyticNonlinear(16)]:
        params = {k: v for k, v in op.config().items() if k != "kind"}
        twin = build_operator(op.kind, **params)
        x = Rng(0).normal(op.in_dim)
        assert np.array_equal(twin.apply(x), op.apply(x))
    assert set(OPERATOR_KINDS) >= {"identity", "projection", "blur1d", "downsample", "hdr_clip", "analytic_nonlinear"}
    with pytest.raises(ValueError):
        build_operator("warp")
