"""Registry of gradient-certification cases for every backward pass.

Each case builds seeded inputs at the toy shapes (C=8, reference grid 16x32)
and runs grad_check. Inputs are positioned away from the non-differentiable
seams the ops legitimately carry (bilinear cell boundaries, L1 zero
crossings) so central differences probe the smooth neighborhood; tolerances
come from the caller. The "pipeline" case certifies the fully assembled
model against the training objective end to end at micro dims.

The "_corrupted" case is a deliberately broken vjp (gradients doubled) used
to prove the checker and the CLI failure path; it is excluded from "run all".
"""

from __future__ import annotations

import numpy as np

from . import features2d as f2d
from . import ops
from . import sequence1d as s1d
from .gradcheck import GradCheckReport, grad_check
from .layout import raycast_depth, rasterize_plane_mask
from .losses import bce_segment, combined_loss, layout_terms, resample_periodic
from .model import LayoutModel, ModelConfig
from .sphere import EquirectGrid, build_sampling_grid
from .synth import cuboid_layout, render_room_image

C, HH, WW, L = 8, 16, 32, 4
_GRID = EquirectGrid(HH, WW)


def _rng(seed):
    return np.random.default_rng(seed)


def _safe_frac(rng, shape, lo=0.15, hi=0.85):
    """Uniform values whose fractional parts stay away from 0/1."""
    return np.floor(rng.uniform(0, 4, shape)) + rng.uniform(lo, hi, shape)


def _safe_offsets(rng, shape):
    mag = rng.uniform(0.12, 0.38, shape)
    return mag * rng.choice([-1.0, 1.0], shape)


def _case_bilinear(eps, seed):
    rng = _rng(seed)
    f = rng.standard_normal((C, HH, WW))
    n = 48
    coords = np.stack([rng.uniform(0.3, HH - 1.3, n).round(0) + rng.uniform(0.15, 0.85, n),
                       _safe_frac(rng, n) + rng.integers(-8, WW + 8, n)], axis=-1)
    return grad_check(ops.bilinear_sample, [f, coords], eps=eps, seed=seed,
                      name="bilinear_sample")


def _case_resize_up(eps, seed):
    f = _rng(seed).standard_normal((C, HH, WW))
    return grad_check(lambda x: ops.resize_bilinear(x, 24, 48), [f], eps=eps,
                      seed=seed, name="resize_up")


def _case_resize_down(eps, seed):
    f = _rng(seed).standard_normal((C, HH, WW))
    return grad_check(lambda x: ops.resize_bilinear(x, 8, 16), [f], eps=eps,
                      seed=seed, name="resize_down")


def _case_conv2d(eps, seed):
    rng = _rng(seed)
    x = rng.standard_normal((3, HH, 2 * HH))
    k = rng.standard_normal((C, 3, 3, 3))
    b = rng.standard_normal(C)
    return grad_check(lambda *a: ops.conv2d(*a, stride=2), [x, k, b], eps=eps,
                      seed=seed, name="conv2d")


def _case_softmax(eps, seed):
    x = _rng(seed).standard_normal((6, 9))
    return grad_check(lambda a: ops.softmax(a, axis=1), [x], eps=eps,
                      seed=seed, name="softmax")


def _case_matmul(eps, seed):
    rng = _rng(seed)
    return grad_check(ops.matmul, [rng.standard_normal((7, 5)),
                                   rng.standard_normal((5, 6))],
                      eps=eps, seed=seed, name="matmul")


def _case_elementwise(eps, seed):
    rng = _rng(seed)
    a, b = rng.standard_normal((2, 5, 6))

    def op(x, y):
        s, v1 = ops.mul(x, y)
        t, v2 = ops.sigmoid(s)
        u, v3 = ops.softplus(t)

        def vjp(g):
            gg = v3(g)[0]
            gg = v2(gg)[0]
            return v1(gg)

        return u, vjp

    return grad_check(op, [a, b], eps=eps, seed=seed, name="elementwise")


def _case_mean(eps, seed):
    x = _rng(seed).standard_normal((5, 7))
    return grad_check(lambda a: ops.mean(a, axis=0), [x], eps=eps, seed=seed,
                      name="mean")


def _case_gather(eps, seed):
    rng = _rng(seed)
    f = rng.standard_normal((C, HH, WW))
    base = build_sampling_grid(_GRID)
    off = _safe_offsets(rng, (HH, WW, 9, 2))
    return grad_check(lambda ff, oo: f2d.distortion_gather(ff, base, oo),
                      [f, off], eps=eps, seed=seed, name="distortion_gather",
                      max_checks=128)


def _case_multiscale(eps, seed):
    rng = _rng(seed)
    H, W = HH * 16, WW * 16
    scales = [rng.standard_normal((C, H // st, W // st)) for st in (4, 8, 16, 32)]
    base = build_sampling_grid(_GRID)
    off = _safe_offsets(rng, (HH, WW, 9, 2))

    def op(s1, s2, s3, s4, oo):
        out, vjp = f2d.multiscale_gather([s1, s2, s3, s4], base, oo)

        def v2(g):
            ds, doff = vjp(g)
            return (*ds, doff)

        return out, v2

    return grad_check(op, [*scales, off], eps=eps, seed=seed,
                      name="multiscale_gather", max_checks=48)


def _case_csda(eps, seed):
    rng = _rng(seed)
    samples = rng.standard_normal((C, HH, WW, 9, 4))
    aw = rng.normal(0, 0.3, (L, 36, C))
    ab = rng.normal(0, 0.1, (L, 36))
    return grad_check(f2d.csda_attend, [samples, aw, ab], eps=eps, seed=seed,
                      name="csda_attend", max_checks=96)


def _case_flip(eps, seed):
    rng = _rng(seed)
    f = rng.standard_normal((C, HH, WW))
    k = rng.normal(0, 0.2, (C, C, 3, 3))
    b = rng.normal(0, 0.1, C)
    off = _safe_offsets(rng, (HH, WW, 9, 2))
    return grad_check(f2d.soft_flip_fuse, [f, k, b, off], eps=eps, seed=seed,
                      name="soft_flip_fuse", max_checks=96)


def _case_disentangle(eps, seed):
    rng = _rng(seed)
    a = rng.standard_normal((C, HH, WW))
    fu = rng.standard_normal((C, HH, WW))
    w = rng.normal(0, 0.2, (1, C, 3, 3))
    b = rng.normal(0, 0.1, 1)

    def op(aa, ff, ww, bb):
        (fh, fv, seg), vjp = f2d.disentangle(aa, ff, ww, bb)
        out = np.concatenate([fh.ravel(), fv.ravel(), seg.ravel()])
        n = fh.size

        def v2(g):
            return vjp(g[:n].reshape(fh.shape), g[n:2 * n].reshape(fv.shape),
                       g[2 * n:].reshape(seg.shape))

        return out, v2

    return grad_check(op, [a, fu, w, b], eps=eps, seed=seed,
                      name="disentangle", max_checks=96)


def _case_compress(eps, seed):
    f = _rng(seed).standard_normal((C, HH, WW))
    return grad_check(f2d.compress_vertical, [f], eps=eps, seed=seed,
                      name="compress_vertical")


def _case_graph(eps, seed):
    rng = _rng(seed)
    return grad_check(s1d.channel_graph_attend,
                      [rng.standard_normal((WW, C)), rng.standard_normal((C, C))],
                      eps=eps, seed=seed, name="channel_graph_attend",
                      max_checks=128)


def _attn_args(rng):
    return [rng.normal(0, 0.3, (C, C)), rng.normal(0, 0.1, C),
            rng.normal(0, 0.3, (C, C)), rng.normal(0, 0.1, C),
            rng.normal(0, 0.3, (C, C)), rng.normal(0, 0.1, C)]


def _case_selfattn(eps, seed):
    rng = _rng(seed)
    return grad_check(s1d.self_attend, [rng.standard_normal((WW, C)), *_attn_args(rng)],
                      eps=eps, seed=seed, name="self_attend", max_checks=64)


def _case_crossattn(eps, seed):
    rng = _rng(seed)
    return grad_check(s1d.cross_attend,
                      [rng.standard_normal((WW, C)), rng.standard_normal((WW, C)),
                       *_attn_args(rng)],
                      eps=eps, seed=seed, name="cross_attend", max_checks=64)


def _case_depth_head(eps, seed):
    rng = _rng(seed)
    return grad_check(s1d.depth_head,
                      [rng.standard_normal((WW, C)), rng.standard_normal(C),
                       np.array([0.3])],
                      eps=eps, seed=seed, name="depth_head")


def _case_height_head(eps, seed):
    rng = _rng(seed)
    return grad_check(s1d.height_head,
                      [rng.standard_normal((WW, C)), rng.standard_normal(C),
                       np.array([0.3])],
                      eps=eps, seed=seed, name="height_head")


def _case_bce(eps, seed):
    rng = _rng(seed)
    logits = rng.standard_normal((HH, WW)) * 2
    target = (rng.uniform(0, 1, (HH, WW)) > 0.5).astype(np.float64)

    def op(x):
        loss, vjp = bce_segment(x, target)
        return np.float64(loss), vjp

    return grad_check(op, [logits], eps=eps, seed=seed, name="bce_segment")


def _case_layout_terms(eps, seed):
    rng = _rng(seed)
    gt = raycast_depth(cuboid_layout(4.0, 6.0, 3.0), 64)
    base = resample_periodic(gt.depth, WW)
    pred = base + rng.uniform(0.15, 0.5, WW) * rng.choice([-1.0, 1.0], WW)
    height = np.array([3.4])

    def op(d, h):
        terms, vjp = layout_terms(d, float(h[0]), gt)
        out = np.array([terms["depth"], terms["height"], terms["normal"],
                        terms["gradient"]])

        def v2(g):
            dd, dh = vjp(g[0], g[1], g[2], g[3])
            return dd, np.array([dh])

        return out, v2

    return grad_check(op, [pred, height], eps=eps, seed=seed,
                      name="layout_terms", max_checks=64)


def _case_pipeline(eps, seed):
    """End-to-end: every parameter against the total training loss, micro dims."""
    cfg = ModelConfig(image_height=96, image_width=192, channels=4, heads=2)
    model = LayoutModel.build(cfg, seed=seed)
    grid = EquirectGrid(96, 192)
    ly = cuboid_layout(4.2, 5.6, 3.1)
    img = render_room_image(ly, grid)
    mask = rasterize_plane_mask(ly, cfg.ref_grid).mask
    gt = raycast_depth(ly, 192)
    names = model.store.names()

    def op(*values):
        for name, v in zip(names, values):
            model.store.set(name, v)
        out = model.forward(img)
        bd, d_seg, d_depth, d_height = combined_loss(
            out.seg_logits, mask, out.depth, out.height, gt)

        def vjp(g):
            model.store.zero_grads()
            out.backward(d_depth * g, d_height * g, d_seg * g)
            return tuple(model.store.grad(n).copy() for n in names)

        return np.float64(bd.total), vjp

    values = [model.store[n].copy() for n in names]
    return grad_check(op, values, eps=eps, seed=seed, name="pipeline",
                      max_checks=6)


def _case_corrupted(eps, seed):
    rng = _rng(seed)

    def bad_matmul(a, b):
        out, vjp = ops.matmul(a, b)

        def v2(g):
            da, db = vjp(g)
            return 2.0 * da, 2.0 * db     # wrong on purpose

        return out, v2

    return grad_check(bad_matmul, [rng.standard_normal((6, 4)),
                                   rng.standard_normal((4, 5))],
                      eps=eps, seed=seed, name="_corrupted")


CASES = {
    "bilinear_sample": _case_bilinear,
    "resize_up": _case_resize_up,
    "resize_down": _case_resize_down,
    "conv2d": _case_conv2d,
    "softmax": _case_softmax,
    "matmul": _case_matmul,
    "elementwise": _case_elementwise,
    "mean": _case_mean,
    "distortion_gather": _case_gather,
    "multiscale_gather": _case_multiscale,
    "csda_attend": _case_csda,
    "soft_flip_fuse": _case_flip,
    "disentangle": _case_disentangle,
    "compress_vertical": _case_compress,
    "channel_graph_attend": _case_graph,
    "self_attend": _case_selfattn,
    "cross_attend": _case_crossattn,
    "depth_head": _case_depth_head,
    "height_head": _case_height_head,
    "bce_segment": _case_bce,
    "layout_terms": _case_layout_terms,
    "pipeline": _case_pipeline,
    "_corrupted": _case_corrupted,
}


def run_cases(pattern: str | None = None, eps: float = 1e-4,
              seed: int = 0) -> list[GradCheckReport]:
    """Run matching cases (hidden ones only when named explicitly)."""
    if pattern:
        names = [n for n in CASES if pattern in n]
    else:
        names = [n for n in CASES if not n.startswith("_")]
    return [CASES[n](eps, seed) for n in names]
