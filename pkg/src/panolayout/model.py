"""End-to-end model: parameter naming, initialization, forward and backward.

The forward pass hand-chains the pure blocks and keeps their vjp closures;
ModelOutput.backward walks them in reverse and accumulates parameter
gradients into the store. Weight names are a stable contract (the DOPW file
holds nothing else), and the full configuration is reconstructable from the
weight shapes alone: C and the pyramid from backbone.stem.weight, the head
count from csda.att.weight, the reference dims from csda.offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import features2d as f2d
from . import ops
from . import sequence1d as s1d
from .errors import NumericalError, ValidationError
from .params import ParamStore
from .sphere import EquirectGrid, build_sampling_grid

_ATTN_PARTS = ("q", "k", "v")


@dataclass(frozen=True)
class ModelConfig:
    image_height: int
    image_width: int
    channels: int = 8
    heads: int = 4
    backbone_gain: float = 2.8
    angular_step: float | None = None

    def __post_init__(self):
        if self.image_width != 2 * self.image_height or self.image_height % 32:
            raise ValidationError(
                f"input must be 2:1 with height divisible by 32, got "
                f"{self.image_height}x{self.image_width}")
        if self.channels < 2 or self.heads < 1 or self.channels % self.heads:
            raise ValidationError(
                f"channels ({self.channels}) must be >= 2 and divisible by "
                f"heads ({self.heads})")

    @property
    def ref_height(self) -> int:
        return self.image_height // 16

    @property
    def ref_width(self) -> int:
        return self.image_width // 16

    @property
    def ref_grid(self) -> EquirectGrid:
        return EquirectGrid(self.ref_height, self.ref_width)


@dataclass(frozen=True, eq=False)
class ModelOutput:
    depth: np.ndarray          # [W'] meters
    height: float              # meters
    seg_logits: np.ndarray     # [H', W'] horizontal-plane logits
    backward: object           # callable(d_depth, d_height, d_seg)
    aux: dict = field(default_factory=dict)


def _attn_names(prefix: str) -> list[str]:
    names = []
    for p in _ATTN_PARTS:
        names += [f"{prefix}.{p}.weight", f"{prefix}.{p}.bias"]
    return names


class LayoutModel:
    """Panorama -> (horizon depth, room height, plane-segmentation logits)."""

    def __init__(self, config: ModelConfig, store: ParamStore):
        self.config = config
        self.store = store
        self.base_coords = build_sampling_grid(config.ref_grid, config.angular_step)

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, config: ModelConfig, seed: int = 0) -> "LayoutModel":
        rng = np.random.default_rng(seed)
        C, L = config.channels, config.heads
        rh, rw = config.ref_height, config.ref_width
        g = config.backbone_gain
        store = ParamStore()

        store.add("backbone.stem.weight", rng.normal(0, g / np.sqrt(27), (C, 3, 3, 3)))
        store.add("backbone.stem.bias", np.zeros(C))
        for i in range(1, f2d.NUM_SCALES + 1):
            store.add(f"backbone.conv{i}.weight",
                      rng.normal(0, g / np.sqrt(9 * C), (C, C, 3, 3)))
            store.add(f"backbone.conv{i}.bias", np.zeros(C))

        store.add("csda.offsets", np.zeros((rh, rw, 9, 2)))
        store.add("csda.att.weight", rng.normal(0, 0.01, (L, f2d.ATTENTION_DOMAIN, C)))
        store.add("csda.att.bias", np.zeros((L, f2d.ATTENTION_DOMAIN)))

        kernel = rng.normal(0, 0.005 / np.sqrt(9 * C), (C, C, 3, 3))
        kernel[np.arange(C), np.arange(C), 1, 1] += 1.0
        store.add("flip.kernel", kernel)
        store.add("flip.bias", np.zeros(C))
        store.add("flip.offsets", np.zeros((rh, rw, 9, 2)))

        store.add("seg.weight", rng.normal(0, 1e-5, (1, C, 3, 3)))
        store.add("seg.bias", np.zeros(1))

        store.add("graph.h.weight", np.eye(C))
        store.add("graph.v.weight", np.eye(C))

        for prefix in ("selfattn.h", "selfattn.v", "crossattn.hv", "crossattn.vh"):
            for p in _ATTN_PARTS:
                sigma = 0.01 if p in ("q", "k") else 0.05
                store.add(f"{prefix}.{p}.weight", rng.normal(0, sigma / np.sqrt(C), (C, C)))
                store.add(f"{prefix}.{p}.bias", np.zeros(C))

        for name in ("depth", "height"):
            store.add(f"head.{name}.weight", rng.normal(0, 0.01 / np.sqrt(C), C))
            store.add(f"head.{name}.bias", np.float64(0.0))
        return cls(config, store)

    @classmethod
    def from_store(cls, store: ParamStore, backbone_gain: float = 2.8) -> "LayoutModel":
        """Reconstruct the configuration from weight shapes."""
        try:
            C = store["backbone.stem.weight"].shape[0]
            L = store["csda.att.weight"].shape[0]
            rh, rw = store["csda.offsets"].shape[:2]
        except ValidationError:
            raise ValidationError("weight store is missing required tensors") from None
        config = ModelConfig(image_height=rh * 16, image_width=rw * 16,
                             channels=C, heads=L, backbone_gain=backbone_gain)
        expected = cls.build(config, seed=0).store
        for name in expected.names():
            if name not in store:
                raise ValidationError(f"weight store is missing {name!r}")
            if store[name].shape != expected[name].shape:
                raise ValidationError(
                    f"weight {name!r} has shape {store[name].shape}, expected "
                    f"{expected[name].shape}")
        extra = set(store.names()) - set(expected.names())
        if extra:
            raise ValidationError(f"weight store has unknown tensors: {sorted(extra)}")
        return cls(config, store)

    @classmethod
    def load(cls, path) -> "LayoutModel":
        return cls.from_store(ParamStore.load(path))

    def save(self, path) -> None:
        self.store.save(path)

    # -- forward / backward -------------------------------------------------

    def forward(self, image: np.ndarray, need_input_grad: bool = False) -> ModelOutput:
        cfg = self.config
        st = self.store
        image = ops.as_tensor(image)
        if image.shape != (3, cfg.image_height, cfg.image_width):
            raise ValidationError(
                f"image must be [3,{cfg.image_height},{cfg.image_width}], "
                f"got {image.shape}")
        ops.ensure_finite("forward input", image)

        kernels = [st["backbone.stem.weight"]] + \
            [st[f"backbone.conv{i}.weight"] for i in range(1, 5)]
        biases = [st["backbone.stem.bias"]] + \
            [st[f"backbone.conv{i}.bias"] for i in range(1, 5)]
        scales, vjp_bb = f2d.backbone_forward(image, kernels, biases,
                                              need_input_grad=need_input_grad)

        samples, vjp_ms = f2d.multiscale_gather(
            scales, self.base_coords, st["csda.offsets"])
        assembled, vjp_csda = f2d.csda_attend(
            samples, st["csda.att.weight"], st["csda.att.bias"])
        fused, vjp_flip = f2d.soft_flip_fuse(
            assembled, st["flip.kernel"], st["flip.bias"], st["flip.offsets"])
        (f_h, f_v, seg), vjp_dis = f2d.disentangle(
            assembled, fused, st["seg.weight"], st["seg.bias"])
        qh0, vjp_ch = f2d.compress_vertical(f_h)
        qv0, vjp_cv = f2d.compress_vertical(f_v)

        gh, vjp_gh = s1d.channel_graph_attend(qh0, st["graph.h.weight"])
        gv, vjp_gv = s1d.channel_graph_attend(qv0, st["graph.v.weight"])
        qh1 = qh0 + gh
        qv1 = qv0 + gv

        def attn_params(prefix):
            return [st[n] for n in _attn_names(prefix)]

        qh2, vjp_sh = s1d.self_attend(qh1, *attn_params("selfattn.h"))
        qv2, vjp_sv = s1d.self_attend(qv1, *attn_params("selfattn.v"))
        qh3, vjp_xh = s1d.cross_attend(qh2, qv2, *attn_params("crossattn.hv"))
        qv3, vjp_xv = s1d.cross_attend(qv2, qh2, *attn_params("crossattn.vh"))

        depth, vjp_depth = s1d.depth_head(
            qv3, st["head.depth.weight"], st["head.depth.bias"])
        height, vjp_height = s1d.height_head(
            qh3, st["head.height.weight"], st["head.height.bias"])
        ops.ensure_finite("forward output", depth, np.asarray(height), seg)

        def backward(d_depth, d_height, d_seg):
            d_depth = np.asarray(d_depth, dtype=np.float64)
            d_seg = np.asarray(d_seg, dtype=np.float64)
            dqv3, dw, db = vjp_depth(d_depth)
            st.accumulate("head.depth.weight", dw)
            st.accumulate("head.depth.bias", db)
            dqh3, dw, db = vjp_height(np.float64(d_height))
            st.accumulate("head.height.weight", dw)
            st.accumulate("head.height.bias", db)

            def put(prefix, grads):
                for name, g in zip(_attn_names(prefix), grads):
                    st.accumulate(name, g)

            dqv2, dqh2a, *gx = vjp_xv(dqv3)
            put("crossattn.vh", gx)
            dqh2, dqv2b, *gx = vjp_xh(dqh3)
            put("crossattn.hv", gx)
            dqh2 = dqh2 + dqh2a
            dqv2 = dqv2 + dqv2b

            dqh1, *gs = vjp_sh(dqh2)
            put("selfattn.h", gs)
            dqv1, *gs = vjp_sv(dqv2)
            put("selfattn.v", gs)

            dg, dwg = vjp_gh(dqh1)
            st.accumulate("graph.h.weight", dwg)
            dqh0 = dqh1 + dg
            dg, dwg = vjp_gv(dqv1)
            st.accumulate("graph.v.weight", dwg)
            dqv0 = dqv1 + dg

            df_h = vjp_ch(dqh0)[0]
            df_v = vjp_cv(dqv0)[0]
            d_assembled, d_fused, dw, db = vjp_dis(df_h, df_v, d_seg)
            st.accumulate("seg.weight", dw)
            st.accumulate("seg.bias", db)

            dfield, dk, db, doff = vjp_flip(d_fused)
            st.accumulate("flip.kernel", dk)
            st.accumulate("flip.bias", db)
            st.accumulate("flip.offsets", doff)
            d_assembled = d_assembled + dfield

            dsamples, dw, db = vjp_csda(d_assembled)
            st.accumulate("csda.att.weight", dw)
            st.accumulate("csda.att.bias", db)

            d_scales, doff = vjp_ms(dsamples)
            st.accumulate("csda.offsets", doff)

            d_image, *dkb = vjp_bb(d_scales)
            for i, name in enumerate(["backbone.stem"] +
                                     [f"backbone.conv{j}" for j in range(1, 5)]):
                st.accumulate(f"{name}.weight", dkb[i])
                st.accumulate(f"{name}.bias", dkb[5 + i])
            return d_image

        return ModelOutput(depth=depth, height=float(height.flat[0]),
                           seg_logits=seg,
                           backward=backward,
                           aux={"assembled": assembled, "fused": fused,
                                "f_h": f_h, "f_v": f_v, "qh": qh3, "qv": qv3})
