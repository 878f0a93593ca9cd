"""2D feature stages: backbone, cross-scale assembling, flip fusion,
plane disentangling, vertical compression."""

import numpy as np
import pytest

from panolayout.features2d import (ATTENTION_DOMAIN, NUM_SCALES,
                                   REFERENCE_SCALE, backbone_forward,
                                   compress_vertical, csda_attend,
                                   disentangle, distortion_gather,
                                   multiscale_gather, soft_flip_fuse)
from panolayout.sphere import EquirectGrid, build_sampling_grid

C, HH, WW = 6, 8, 16


def _backbone_params(rng, channels=4):
    shapes = [(channels, 3, 3, 3)] + [(channels, channels, 3, 3)] * NUM_SCALES
    kernels = [rng.normal(size=s) * 0.2 for s in shapes]
    biases = [rng.normal(size=channels) * 0.01 for _ in shapes]
    return kernels, biases


def test_backbone_scale_shapes(rng):
    kernels, biases = _backbone_params(rng)
    scales, _ = backbone_forward(rng.normal(size=(3, 64, 128)), kernels, biases)
    assert [s.shape for s in scales] == [
        (4, 16, 32), (4, 8, 16), (4, 4, 8), (4, 2, 4)]


def test_backbone_column_shift_equivariance(rng):
    # circular horizontal padding + strided convs: rolling the input by the
    # coarsest stride rolls every scale by 32 / stride_s columns
    kernels, biases = _backbone_params(rng)
    img = rng.normal(size=(3, 64, 128))
    base, _ = backbone_forward(img, kernels, biases)
    rolled, _ = backbone_forward(np.roll(img, 32, axis=2), kernels, biases)
    for s, (a, b) in enumerate(zip(base, rolled)):
        stride = 4 * 2 ** s
        np.testing.assert_allclose(b, np.roll(a, 32 // stride, axis=2),
                                   atol=1e-10)


def test_backbone_input_grad_optional(rng):
    kernels, biases = _backbone_params(rng)
    img = rng.normal(size=(3, 64, 128))
    scales, vjp = backbone_forward(img, kernels, biases)
    grads = vjp([np.ones_like(s) for s in scales])
    assert grads[0] is None
    scales, vjp = backbone_forward(img, kernels, biases, need_input_grad=True)
    grads = vjp([np.ones_like(s) for s in scales])
    assert grads[0].shape == img.shape


def test_distortion_gather_zero_offsets_hits_grid_points(rng):
    field = rng.normal(size=(C, HH, WW))
    base = build_sampling_grid(EquirectGrid(HH, WW))
    out, _ = distortion_gather(field, base, np.zeros_like(base))
    # center tap is pinned to the pixel itself
    np.testing.assert_allclose(out[:, :, :, 4], field, atol=1e-12)


def test_multiscale_gather_stacks_scales(rng):
    base = build_sampling_grid(EquirectGrid(HH, WW))
    scales = [rng.normal(size=(C, HH * 4 // s, WW * 4 // s))
              for s in (1, 2, 4, 8)]
    # reference scale (index 2) has the output resolution here
    scales[REFERENCE_SCALE] = rng.normal(size=(C, HH, WW))
    scales[0] = rng.normal(size=(C, HH * 4, WW * 4))
    scales[1] = rng.normal(size=(C, HH * 2, WW * 2))
    scales[3] = rng.normal(size=(C, HH // 2, WW // 2))
    out, _ = multiscale_gather(scales, base, np.zeros_like(base))
    assert out.shape == (C, HH, WW, 9, NUM_SCALES)
    # the reference scale at the pinned center tap is the field itself
    np.testing.assert_allclose(out[:, :, :, 4, REFERENCE_SCALE],
                               scales[REFERENCE_SCALE], atol=1e-12)


def test_csda_one_hot_bias_selects_center(rng):
    L = 2
    samples = rng.normal(size=(C, HH, WW, 9, NUM_SCALES))
    weight = np.zeros((L, ATTENTION_DOMAIN, C))
    bias = np.full((L, ATTENTION_DOMAIN), -1e4)
    center_j = 4 * NUM_SCALES + REFERENCE_SCALE
    bias[:, center_j] = 1e4
    out, _ = csda_attend(samples, weight, bias)
    np.testing.assert_array_equal(out, samples[:, :, :, 4, REFERENCE_SCALE])


def test_csda_uniform_logits_average_all_samples(rng):
    L = 3
    samples = rng.normal(size=(C, HH, WW, 9, NUM_SCALES))
    out, _ = csda_attend(samples, np.zeros((L, ATTENTION_DOMAIN, C)),
                         np.zeros((L, ATTENTION_DOMAIN)))
    np.testing.assert_allclose(out, samples.reshape(C, HH, WW, -1).mean(-1),
                               atol=1e-14)


def test_flip_fuse_identity_on_symmetric_field(rng):
    half = rng.normal(size=(C, HH // 2, WW))
    field = np.concatenate([half, half[:, ::-1, :]], axis=1)
    kernel = np.zeros((C, C, 3, 3))
    kernel[np.arange(C), np.arange(C), 1, 1] = 1.0
    out, _ = soft_flip_fuse(field, kernel, np.zeros(C),
                            np.zeros((HH, WW, 9, 2)))
    np.testing.assert_allclose(out, field, atol=1e-12)


def test_flip_fuse_is_flip_average_with_identity_kernel(rng):
    field = rng.normal(size=(C, HH, WW))
    kernel = np.zeros((C, C, 3, 3))
    kernel[np.arange(C), np.arange(C), 1, 1] = 1.0
    out, _ = soft_flip_fuse(field, kernel, np.zeros(C),
                            np.zeros((HH, WW, 9, 2)))
    np.testing.assert_allclose(out, 0.5 * (field + field[:, ::-1, :]),
                               atol=1e-12)


def test_partition_identity_holds(rng):
    seg_w = rng.normal(size=(1, C, 3, 3)) * 0.3
    seg_b = rng.normal(size=1)
    worst = 0.0
    for _ in range(100):
        assembled = rng.normal(size=(C, HH, WW)) * 3.0
        fused = rng.normal(size=(C, HH, WW)) * 3.0
        (f_h, f_v, seg), _ = disentangle(assembled, fused, seg_w, seg_b)
        worst = max(worst, float(np.abs(f_h + f_v - (assembled + fused)).max()))
        assert seg.shape == (HH, WW)
    assert worst < 1e-12


def test_disentangle_gate_direction(rng):
    # strongly positive logits route (almost) everything into f_h
    assembled = rng.normal(size=(C, HH, WW))
    seg_w = np.zeros((1, C, 3, 3))
    seg_b = np.array([50.0])
    (f_h, f_v, _), _ = disentangle(assembled, np.zeros_like(assembled),
                                   seg_w, seg_b)
    np.testing.assert_allclose(f_h, assembled, atol=1e-12)
    np.testing.assert_allclose(f_v, 0.0, atol=1e-12)


def test_compress_vertical_mean_and_shape(rng):
    field = np.zeros((C, HH, WW))
    field[:, 3, :] = 7.0
    out, _ = compress_vertical(field)
    assert out.shape == (WW, C)
    np.testing.assert_allclose(out, 7.0 / HH, atol=1e-15)


def test_compress_vertical_backward_spreads_evenly(rng):
    field = rng.normal(size=(C, HH, WW))
    out, vjp = compress_vertical(field)
    g = rng.normal(size=out.shape)
    (df,) = vjp(g)
    np.testing.assert_allclose(df, np.broadcast_to(g.T[:, None, :] / HH,
                                                   field.shape), atol=1e-15)
