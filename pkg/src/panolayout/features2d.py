"""2D feature stages: backbone stub, distortion-aware cross-scale assembling,
soft flip fusion, and orthogonal-plane disentangling.

All functions are pure: parameters come in as arrays and every function
returns ``(out, vjp)`` in the same convention as ops.py. The model
orchestrator owns parameter naming and gradient accumulation.

Shapes at the reference scale are [C, H', W'] where H' = H/16 of the input
panorama; the multi-scale pyramid carries strides 4, 8, 16, 32 and the third
scale is the reference.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from . import ops

NUM_SCALES = 4
REFERENCE_SCALE = 2          # index into the pyramid list (stride 16)
TAPS = 9                     # 3x3 tangent-plane stencil
ATTENTION_DOMAIN = TAPS * NUM_SCALES   # 36 cross-scale samples per position


def backbone_forward(image: np.ndarray, kernels, biases, need_input_grad: bool = False):
    """Linear multi-scale pyramid: a stride-2 stem then four stride-2 convs.

    image [3, H, W] with W == 2H and H divisible by 32. Returns the list of
    the four conv outputs (strides 4, 8, 16, 32, each [C, H/s, W/s]) and a
    vjp mapping their cotangents to (d_image, d_kernels..., d_biases...);
    d_image is None unless requested (it is the most expensive scatter and
    nothing upstream consumes it during training).

    The stack is deliberately activation-free: the pipeline's nonlinearity
    lives in the attention stages, the disentangling gate and the heads,
    which keeps this stub exactly shift-equivariant and cheap to certify.
    """
    image = ops.as_tensor(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValidationError(f"image must be [3, H, W], got {image.shape}")
    H, W = image.shape[1:]
    if W != 2 * H or H % 32 != 0:
        raise ValidationError(f"image must be 2:1 with H divisible by 32, got {H}x{W}")
    if len(kernels) != NUM_SCALES + 1 or len(biases) != NUM_SCALES + 1:
        raise ValidationError("backbone takes 5 kernels and 5 biases (stem + 4)")

    scales = []
    vjps = []
    x = image
    for k, b in zip(kernels, biases):
        x, v = ops.conv2d(x, k, b, stride=2)
        vjps.append(v)
        scales.append(x)
    scales = scales[1:]          # drop the stem level; strides 4..32 remain

    def vjp(d_scales):
        if len(d_scales) != NUM_SCALES:
            raise ValidationError("backbone vjp expects 4 cotangents")
        dks = [None] * (NUM_SCALES + 1)
        dbs = [None] * (NUM_SCALES + 1)
        dx = None
        for i in range(NUM_SCALES, -1, -1):
            g = dx
            if i >= 1:
                gs = d_scales[i - 1]
                g = gs if g is None else g + gs
            if i == 0 and not need_input_grad:
                # kernel/bias grads only; skip the image scatter
                dxi, dki, dbi = vjps[i](g)
                dks[i], dbs[i] = dki, dbi
                dx = None
                break
            dxi, dki, dbi = vjps[i](g)
            dks[i], dbs[i] = dki, dbi
            dx = dxi
        return (dx, *dks, *dbs)

    return scales, vjp


def distortion_gather(field: np.ndarray, base_coords: np.ndarray, offsets: np.ndarray):
    """Sample a field at the tangent-plane stencil plus learned offsets.

    field [C, H', W'], base_coords and offsets [H', W', 9, 2] in pixel-center
    (row, col); returns [C, H', W', 9]. Differentiable w.r.t. the field and
    the offsets (the base grid is a constant of the geometry).
    """
    field = ops.as_tensor(field)
    base_coords = ops.as_tensor(base_coords)
    offsets = ops.as_tensor(offsets)
    C, Hh, Ww = field.shape
    want = (Hh, Ww, TAPS, 2)
    if base_coords.shape != want or offsets.shape != want:
        raise ValidationError(
            f"coordinate tables must be {want}, got {base_coords.shape} / {offsets.shape}")
    coords = (base_coords + offsets).reshape(-1, 2)
    flat, inner = ops.bilinear_sample(field, coords)
    out = flat.reshape(C, Hh, Ww, TAPS)

    def vjp(g):
        df, dcoords = inner(g.reshape(C, -1))
        return df, dcoords.reshape(want)

    return out, vjp


def multiscale_gather(scales, base_coords: np.ndarray, offsets: np.ndarray):
    """Align all four scales to the reference dims and gather the stencil.

    Every scale is bilinearly resized to the reference resolution and sampled
    at the same base+offset coordinates (the offset table is shared across
    scales). Output [C, H', W', 9, 4]; vjp returns (d_scales list, d_offsets).
    """
    if len(scales) != NUM_SCALES:
        raise ValidationError(f"expected {NUM_SCALES} scales")
    Hh, Ww = scales[REFERENCE_SCALE].shape[1:]
    outs = []
    resize_vjps = []
    gather_vjps = []
    for f in scales:
        rf, rv = ops.resize_bilinear(f, Hh, Ww)
        gf, gv = distortion_gather(rf, base_coords, offsets)
        outs.append(gf)
        resize_vjps.append(rv)
        gather_vjps.append(gv)
    out = np.stack(outs, axis=-1)

    def vjp(g):
        d_scales = []
        d_off = np.zeros_like(offsets)
        for s in range(NUM_SCALES):
            df, doff = gather_vjps[s](g[..., s])
            d_scales.append(resize_vjps[s](df)[0])
            d_off += doff
        return d_scales, d_off

    return out, vjp


def csda_attend(samples: np.ndarray, att_weight: np.ndarray, att_bias: np.ndarray):
    """Cross-scale distortion-aware attention over the 36-sample domain.

    samples [C, H', W', 9, 4]; per position the 9 taps x 4 scales flatten to
    j = tap*4 + scale. Each of the L heads owns a contiguous C/L channel
    block; its logits are a learned linear read of the full center feature
    (tap 4 of the reference scale): att_weight [L, 36, C], att_bias [L, 36].
    Output [C, H', W']: per head, the attention-weighted sum over the 36
    samples of its own channel block.
    """
    samples = ops.as_tensor(samples)
    att_weight = ops.as_tensor(att_weight)
    att_bias = ops.as_tensor(att_bias)
    if samples.ndim != 5 or samples.shape[3:] != (TAPS, NUM_SCALES):
        raise ValidationError(f"samples must be [C,H',W',9,4], got {samples.shape}")
    C, Hh, Ww = samples.shape[:3]
    J = ATTENTION_DOMAIN
    if att_weight.ndim != 3 or att_weight.shape[1:] != (J, C):
        raise ValidationError(f"att_weight must be [L,{J},{C}], got {att_weight.shape}")
    L = att_weight.shape[0]
    if att_bias.shape != (L, J):
        raise ValidationError(f"att_bias must be [{L},{J}], got {att_bias.shape}")
    if C % L != 0:
        raise ValidationError(f"channels {C} must divide evenly into {L} heads")

    Q = Hh * Ww
    center = samples[:, :, :, 4, REFERENCE_SCALE].reshape(C, Q)
    logits = np.einsum("ljc,cq->lqj", att_weight, center, optimize=True) \
        + att_bias[:, None, :]
    att, att_vjp = ops.softmax(logits, axis=-1)

    blocks = samples.reshape(C, Q, J).reshape(L, C // L, Q, J)
    out = np.einsum("ldqj,lqj->ldq", blocks, att, optimize=True).reshape(C, Hh, Ww)

    def vjp(g):
        gb = g.reshape(L, C // L, Q)
        datt = np.einsum("ldq,ldqj->lqj", gb, blocks, optimize=True)
        dblocks = np.einsum("ldq,lqj->ldqj", gb, att, optimize=True)
        dlogits = att_vjp(datt)[0]
        db = dlogits.sum(axis=1)
        dw = np.einsum("lqj,cq->ljc", dlogits, center, optimize=True)
        dcenter = np.einsum("lqj,ljc->cq", dlogits, att_weight, optimize=True)
        dsamples = dblocks.reshape(C, Q, J).reshape(C, Hh, Ww, TAPS, NUM_SCALES).copy()
        dsamples[:, :, :, 4, REFERENCE_SCALE] += dcenter.reshape(C, Hh, Ww)
        return dsamples, dw, db

    return out, vjp


def soft_flip_fuse(field: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                   offsets: np.ndarray):
    """Fuse a feature map with a deformably convolved vertical flip of itself.

    The field is flipped upside down, sampled on a 3x3 lattice displaced by
    learned per-position offsets [H', W', 9, 2], combined by a 3x3 kernel
    [C, C, 3, 3] + bias [C], and averaged elementwise with the input:
    out = (field + deform_conv(flip(field))) / 2. With zero offsets, an
    identity kernel and zero bias this is exactly the flip-average, so a
    vertically symmetric field passes through unchanged.
    """
    field = ops.as_tensor(field)
    kernel = ops.as_tensor(kernel)
    bias = ops.as_tensor(bias)
    offsets = ops.as_tensor(offsets)
    if field.ndim != 3:
        raise ValidationError(f"field must be [C,H',W'], got {field.shape}")
    C, Hh, Ww = field.shape
    if kernel.shape != (C, C, 3, 3) or bias.shape != (C,):
        raise ValidationError(f"kernel/bias must be [{C},{C},3,3]/[{C}]")
    if offsets.shape != (Hh, Ww, TAPS, 2):
        raise ValidationError(f"offsets must be [{Hh},{Ww},{TAPS},2], got {offsets.shape}")

    flipped = np.ascontiguousarray(field[:, ::-1, :])
    rr, cc = np.meshgrid(np.arange(Hh, dtype=np.float64),
                         np.arange(Ww, dtype=np.float64), indexing="ij")
    di, dj = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], indexing="ij")
    lattice = np.empty((Hh, Ww, TAPS, 2))
    lattice[..., 0] = rr[:, :, None] + di.reshape(-1)[None, None, :]
    lattice[..., 1] = cc[:, :, None] + dj.reshape(-1)[None, None, :]
    coords = (lattice + offsets).reshape(-1, 2)

    taps_flat, sample_vjp = ops.bilinear_sample(flipped, coords)
    taps = taps_flat.reshape(C, Hh * Ww, TAPS)
    kflat = kernel.reshape(C, C, TAPS)
    conv = np.einsum("ock,cqk->oq", kflat, taps, optimize=True) + bias[:, None]
    out = 0.5 * (field + conv.reshape(C, Hh, Ww))

    def vjp(g):
        dfield = 0.5 * g
        dconv = 0.5 * g.reshape(C, -1)
        dk = np.einsum("oq,cqk->ock", dconv, taps, optimize=True).reshape(C, C, 3, 3)
        db = dconv.sum(axis=1)
        dtaps = np.einsum("oq,ock->cqk", dconv, kflat, optimize=True)
        dflipped, dcoords = sample_vjp(dtaps.reshape(C, -1))
        dfield = dfield + dflipped[:, ::-1, :]
        return dfield, dk, db, dcoords.reshape(Hh, Ww, TAPS, 2)

    return out, vjp


def disentangle(assembled: np.ndarray, fused: np.ndarray,
                seg_weight: np.ndarray, seg_bias: np.ndarray):
    """Split features into horizontal/vertical planes by a learned soft mask.

    base = assembled + fused; logits S = conv3x3(base) (C -> 1, circular
    columns); f_h = base * sigmoid(S) and f_v = base * (1 - sigmoid(S)), so
    f_h + f_v reconstructs base exactly. Returns (f_h, f_v, seg_logits) and a
    vjp over the three cotangents in the same order.
    """
    assembled = ops.as_tensor(assembled)
    fused = ops.as_tensor(fused)
    if assembled.shape != fused.shape or assembled.ndim != 3:
        raise ValidationError("assembled/fused must be matching [C,H',W'] maps")
    base, base_vjp = ops.add(assembled, fused)
    logits3, conv_vjp = ops.conv2d(base, seg_weight, seg_bias, stride=1)
    seg = logits3[0]
    gate, gate_vjp = ops.sigmoid(seg)
    f_h = base * gate[None]
    f_v = base * (1.0 - gate[None])

    def vjp(g_fh, g_fv, g_seg):
        dbase = g_fh * gate[None] + g_fv * (1.0 - gate[None])
        dgate = np.sum((g_fh - g_fv) * base, axis=0)
        dseg = gate_vjp(dgate)[0] + g_seg
        dbase2, dw, db = conv_vjp(dseg[None])
        dbase = dbase + dbase2
        da, df = base_vjp(dbase)
        return da, df, dw, db

    return (f_h, f_v, seg), vjp


def compress_vertical(field: np.ndarray):
    """Mean over image rows, transposed to a per-column sequence [W', C]."""
    field = ops.as_tensor(field)
    if field.ndim != 3:
        raise ValidationError(f"field must be [C,H',W'], got {field.shape}")
    C, Hh, Ww = field.shape
    out = field.mean(axis=1).T.copy()

    def vjp(g):
        return (np.broadcast_to(g.T[:, None, :] / Hh, (C, Hh, Ww)).copy(),)

    return out, vjp
