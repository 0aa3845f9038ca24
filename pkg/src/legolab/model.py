"""Encoder stacks over the autodiff engine.

Variants: vanilla multi-head attention, weight-tied (one layer reused at
every depth, optionally with stochastic depth), the structured-attention
replacements lego_v0 / lego_v1 (convolutional pathway + hardcoded
association/broadcast heads, v1 adds ordinary heads), and conv_hybrid
(depthwise convolution before the Q/K/V projections).

Post-layer-norm ordering throughout; learned absolute positional
embeddings added to token embeddings.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .attention_maps import (build_association, build_broadcast,
                             build_manipulation_target)
from .autodiff import Tensor

VARIANTS = ("vanilla", "weight_tied", "lego_v0", "lego_v1", "conv_hybrid")

CHECKPOINT_VERSION = 1

# widths of the LEGO attention pathways at hidden size 768
_BASE_HIDDEN = 768
_CONV_WIDTH_BASE = {"lego_v0": 576, "lego_v1": 384}
_V1_ATTN_TOTAL_BASE = 384


def _scaled(base: int, hidden: int, multiple: int = 1) -> int:
    raw = base * hidden / _BASE_HIDDEN
    return max(multiple, multiple * round(raw / multiple))


@dataclass
class ModelConfig:
    depth: int
    hidden: int
    heads: int
    vocab_size: int
    max_seq_len: int
    num_classes: int
    variant: str = "vanilla"
    ff_dim: int | None = None
    conv_kernel: int = 21
    conv_channels: int | None = None
    hardcoded_value_dim: int | None = None    # per hardcoded head
    hardcoded_value_total: int | None = None  # width of the shared value map
    v1_attn_heads: int = 3
    v1_attn_total: int | None = None
    stochastic_depth_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant: {self.variant!r}")
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv kernel size must be odd")
        if self.ff_dim is None:
            self.ff_dim = 4 * self.hidden
        if self.variant in ("lego_v0", "lego_v1"):
            if self.conv_channels is None:
                self.conv_channels = _scaled(
                    _CONV_WIDTH_BASE[self.variant], self.hidden)
            if self.hardcoded_value_dim is None:
                self.hardcoded_value_dim = _scaled(64, self.hidden)
            if self.hardcoded_value_total is None:
                # per-head width is authoritative; the alternative reading
                # (a single 384-wide map at base scale for v1) is available
                # by setting hardcoded_value_total explicitly
                self.hardcoded_value_total = 3 * self.hardcoded_value_dim
            if self.hardcoded_value_total % 3 != 0:
                raise ValueError("hardcoded_value_total must be divisible by 3")
        if self.variant == "lego_v1":
            if self.v1_attn_total is None:
                self.v1_attn_total = _scaled(
                    _V1_ATTN_TOTAL_BASE, self.hidden, self.v1_attn_heads)
            if self.v1_attn_total % self.v1_attn_heads != 0:
                raise ValueError("v1_attn_total must divide by v1_attn_heads")
        if self.variant == "conv_hybrid" and self.conv_channels is None:
            self.conv_channels = self.hidden
        if self.stochastic_depth_range is not None:
            lo, hi = self.stochastic_depth_range
            self.stochastic_depth_range = (int(lo), int(hi))
            if not (1 <= lo <= hi <= self.depth):
                raise ValueError("stochastic depth range must lie in [1, depth]")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def tied(self) -> bool:
        return self.variant == "weight_tied"

    @property
    def num_layer_params(self) -> int:
        return 1 if self.tied else self.depth

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        if raw.get("stochastic_depth_range") is not None:
            raw["stochastic_depth_range"] = tuple(raw["stochastic_depth_range"])
        return cls(**raw)


@dataclass
class ForwardTrace:
    hidden: list            # per executed layer, Tensor [B, T, hidden]
    attention: list         # per executed layer, dict of attention maps
    embedded: Tensor


def _normal(rng, shape, std=0.02):
    return rng.normal(0.0, std, size=shape)


def _layer_param_shapes(config: ModelConfig) -> dict[str, tuple]:
    d, f = config.hidden, config.ff_dim
    shapes = {
        "ln1_g": (d,), "ln1_b": (d,), "ln2_g": (d,), "ln2_b": (d,),
        "ff1_w": (d, f), "ff1_b": (f,), "ff2_w": (f, d), "ff2_b": (d,),
    }
    if config.variant in ("vanilla", "weight_tied", "conv_hybrid"):
        shapes.update({
            "wq": (d, d), "bq": (d,), "wk": (d, d), "bk": (d,),
            "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,),
        })
        if config.variant == "conv_hybrid":
            shapes["conv_kernel"] = (config.conv_kernel, d)
    else:
        c = config.conv_channels
        hvt = config.hardcoded_value_total
        shapes.update({
            "cp1_w": (d, c), "cp1_b": (c,),
            "cp_kernel": (config.conv_kernel, c),
            "cp2_w": (c, c), "cp2_b": (c,),
            "hv_w": (d, hvt), "hv_b": (hvt,),
        })
        merged = c + hvt
        if config.variant == "lego_v1":
            vt = config.v1_attn_total
            shapes.update({
                "aq_w": (d, vt), "aq_b": (vt,),
                "ak_w": (d, vt), "ak_b": (vt,),
                "av_w": (d, vt), "av_b": (vt,),
            })
            merged += vt
        shapes.update({"out_w": (merged, d), "out_b": (d,)})
    return shapes


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Fresh parameters: normal(0, 0.02) weights, zero biases, unit LN gains."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def par(name, shape, kind="weight"):
        if kind == "weight":
            data = _normal(rng, shape)
        elif kind == "zeros":
            data = np.zeros(shape)
        else:
            data = np.ones(shape)
        params[name] = ad.parameter(data)

    par("tok_emb", (config.vocab_size, config.hidden))
    par("pos_emb", (config.max_seq_len, config.hidden))
    for l in range(config.num_layer_params):
        for name, shape in _layer_param_shapes(config).items():
            if name.endswith("_b") or name in ("bq", "bk", "bv", "bo"):
                kind = "zeros"
            elif name.endswith("_g"):
                kind = "ones"
            else:
                kind = "weight"
            par(f"layer{l}.{name}", shape, kind)
    par("cls_w", (config.hidden, config.num_classes))
    par("cls_b", (config.num_classes,), "zeros")
    return params


class _LayerView:
    """Attribute access to one layer's parameters."""

    def __init__(self, params: dict[str, Tensor], index: int):
        self._params = params
        self._prefix = f"layer{index}."

    def __getattr__(self, name: str) -> Tensor:
        try:
            return self._params[self._prefix + name]
        except KeyError:
            raise AttributeError(name) from None


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, T, d = x.shape
    return ad.transpose(ad.reshape(x, (B, T, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    B, h, T, hd = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (B, T, h * hd))


def _attend(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = ad.scale(ad.matmul(q, ad.swap_last(k)), scale)
    attn = ad.softmax_rows(scores)
    return ad.matmul(attn, v), attn


def _ffn_block(x: Tensor, layer: _LayerView) -> Tensor:
    h = ad.gelu(ad.linear(x, layer.ff1_w, layer.ff1_b))
    out = ad.linear(h, layer.ff2_w, layer.ff2_b)
    return ad.layer_norm(ad.add(x, out), layer.ln2_g, layer.ln2_b)


def mha_forward(x: Tensor, layer: _LayerView,
                config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Bidirectional scaled dot-product attention block (post-LN).

    Returns the block output [B, T, d] and the attention maps
    [B, heads, T, T].
    """
    if config.variant == "conv_hybrid":
        x_in = ad.depthwise_conv1d(x, layer.conv_kernel)
    else:
        x_in = x
    q = _split_heads(ad.linear(x_in, layer.wq, layer.bq), config.heads)
    k = _split_heads(ad.linear(x_in, layer.wk, layer.bk), config.heads)
    v = _split_heads(ad.linear(x_in, layer.wv, layer.bv), config.heads)
    ctx, attn = _attend(q, k, v)
    out = ad.linear(_merge_heads(ctx), layer.wo, layer.bo)
    h = ad.layer_norm(ad.add(x, out), layer.ln1_g, layer.ln1_b)
    return _ffn_block(h, layer), attn


def conv_hybrid_attention(x: Tensor, layer: _LayerView,
                          config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Depthwise temporal convolution feeding the Q/K/V projections."""
    return mha_forward(x, layer, config)


def hardcoded_maps(ids: np.ndarray, cls_id: int,
                   sep_id: int) -> np.ndarray:
    """Stack the association / CLS / SEP patterns per sequence: [B, 3, T, T]."""
    ids = np.atleast_2d(np.asarray(ids))
    B, T = ids.shape
    maps = np.empty((B, 3, T, T))
    for b in range(B):
        maps[b, 0] = build_association(ids[b]).matrix
        maps[b, 1] = build_broadcast(ids[b], cls_id, "broadcast_cls").matrix
        maps[b, 2] = build_broadcast(ids[b], sep_id, "broadcast_sep").matrix
    return maps


def lego_attention_forward(x: Tensor, maps: np.ndarray, layer: _LayerView,
                           config: ModelConfig) -> tuple[Tensor, Tensor | None]:
    """Structured attention block: conv pathway + hardcoded heads
    (+ ordinary heads for lego_v1), merged by a learned projection.

    maps holds the per-sequence hardcoded patterns [B, 3, T, T]; they are
    shared across layers, only the value maps are per-layer.
    """
    if config.variant not in ("lego_v0", "lego_v1"):
        raise ValueError(f"not a lego variant: {config.variant!r}")
    # (a) convolutional manipulation pathway
    conv_h = ad.relu(ad.linear(x, layer.cp1_w, layer.cp1_b))
    conv_h = ad.depthwise_conv1d(conv_h, layer.cp_kernel)
    conv_out = ad.linear(conv_h, layer.cp2_w, layer.cp2_b)
    # (c) hardcoded heads through the per-layer value map
    values = ad.linear(x, layer.hv_w, layer.hv_b)       # [B, T, hvt]
    per_head = config.hardcoded_value_total // 3
    hc_parts = []
    for j in range(3):
        vj = _slice_last(values, j * per_head, (j + 1) * per_head)
        hc_parts.append(ad.matmul(Tensor(maps[:, j]), vj))
    parts = [conv_out, *hc_parts]
    attn = None
    if config.variant == "lego_v1":
        heads = config.v1_attn_heads
        q = _split_heads(ad.linear(x, layer.aq_w, layer.aq_b), heads)
        k = _split_heads(ad.linear(x, layer.ak_w, layer.ak_b), heads)
        v = _split_heads(ad.linear(x, layer.av_w, layer.av_b), heads)
        ctx, attn = _attend(q, k, v)
        parts.append(_merge_heads(ctx))
    merged = ad.linear(ad.concat_last(parts), layer.out_w, layer.out_b)
    h = ad.layer_norm(ad.add(x, merged), layer.ln1_g, layer.ln1_b)
    return _ffn_block(h, layer), attn


def _slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[..., start:stop] = g
        ad._accum(x, dx)
    return ad._make(x.data[..., start:stop], (x,), bwd)


def encoder_forward(ids: np.ndarray, config: ModelConfig,
                    params: dict[str, Tensor], mode: str = "eval",
                    rng: np.random.Generator | None = None,
                    vocab_cls_id: int = 1,
                    vocab_sep_id: int = 2) -> ForwardTrace:
    """Run the full stack, returning per-layer hidden states and maps."""
    ids = np.atleast_2d(np.asarray(ids))
    B, T = ids.shape
    if T > config.max_seq_len:
        raise ValueError(f"sequence length {T} exceeds {config.max_seq_len}")
    depth = config.depth
    if mode == "train" and config.stochastic_depth_range is not None:
        if rng is None:
            raise ValueError("stochastic depth requires an rng")
        lo, hi = config.stochastic_depth_range
        depth = int(rng.integers(lo, hi + 1))

    tok = ad.embedding(params["tok_emb"], ids)
    pos = ad.embedding(params["pos_emb"], np.arange(T))
    x = ad.add(tok, pos)
    embedded = x

    lego = config.variant in ("lego_v0", "lego_v1")
    maps = hardcoded_maps(ids, vocab_cls_id, vocab_sep_id) if lego else None

    hidden, attention = [], []
    for l in range(depth):
        layer = _LayerView(params, 0 if config.tied else l)
        if lego:
            x, attn = lego_attention_forward(x, maps, layer, config)
            attention.append({"hardcoded": maps, "heads": attn})
        else:
            x, attn = mha_forward(x, layer, config)
            attention.append({"heads": attn})
        hidden.append(x)
    return ForwardTrace(hidden=hidden, attention=attention, embedded=embedded)


def classify(trace: ForwardTrace, anchors: np.ndarray,
             params: dict[str, Tensor]) -> Tensor:
    """Shared linear head on the last layer's states at the clause anchors."""
    anchors = np.atleast_2d(np.asarray(anchors))
    picked = ad.take_positions(trace.hidden[-1], anchors)
    return ad.linear(picked, params["cls_w"], params["cls_b"])


# --- accounting --------------------------------------------------------------

def param_breakdown(config: ModelConfig) -> dict[str, int]:
    d, f = config.hidden, config.ff_dim
    emb = config.vocab_size * d + config.max_seq_len * d
    ln = 4 * d
    ff = d * f + f + f * d + d
    if config.variant in ("vanilla", "weight_tied", "conv_hybrid"):
        attn = 4 * (d * d + d)
        if config.variant == "conv_hybrid":
            attn += config.conv_kernel * d
    else:
        c = config.conv_channels
        hvt = config.hardcoded_value_total
        conv = (d * c + c) + config.conv_kernel * c + (c * c + c)
        hv = d * hvt + hvt
        merged = c + hvt
        ordinary = 0
        if config.variant == "lego_v1":
            vt = config.v1_attn_total
            ordinary = 3 * (d * vt + vt)
            merged += vt
        attn = conv + hv + ordinary + (merged * d + d)
    per_layer = attn + ff + ln
    layers = config.num_layer_params
    head = d * config.num_classes + config.num_classes
    return {
        "embedding": emb,
        "attention_per_layer": attn,
        "ffn_per_layer": ff + ln,
        "attention_total": attn * layers,
        "classifier": head,
        "total": emb + per_layer * layers + head,
    }


def param_count(config: ModelConfig) -> int:
    return param_breakdown(config)["total"]


def flops_breakdown(config: ModelConfig, T: int) -> dict[str, int]:
    """Analytic multiply-add count for one forward pass of one sequence."""
    d, f = config.hidden, config.ff_dim
    ff = 2 * T * d * f
    if config.variant in ("vanilla", "weight_tied", "conv_hybrid"):
        attn = 4 * T * d * d + 2 * T * T * d
        if config.variant == "conv_hybrid":
            attn += T * config.conv_kernel * d
    else:
        c = config.conv_channels
        hvt = config.hardcoded_value_total
        per_head = hvt // 3
        conv = T * d * c + T * c * c + T * config.conv_kernel * c
        hardcoded = 3 * T * T * per_head + T * d * hvt
        merged = c + hvt
        ordinary = 0
        if config.variant == "lego_v1":
            vt = config.v1_attn_total
            ordinary = 3 * T * d * vt + 2 * T * T * vt
            merged += vt
        attn = conv + hardcoded + ordinary + T * merged * d
    per_layer = attn + ff
    return {
        "attention_per_layer": attn,
        "ffn_per_layer": ff,
        "attention_total": attn * config.depth,
        "total": per_layer * config.depth,
    }


def flops_estimate(config: ModelConfig, T: int) -> int:
    return flops_breakdown(config, T)["total"]


# --- checkpointing -----------------------------------------------------------

def save_checkpoint(path, config: ModelConfig,
                    params: dict[str, Tensor]) -> None:
    meta = json.dumps({"version": CHECKPOINT_VERSION,
                       "config": json.loads(config.to_json())})
    arrays = {f"param/{k}": v.data for k, v in params.items()}
    np.savez(path, __meta__=np.array(meta), **arrays)


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, Tensor]]:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        config = ModelConfig.from_json(json.dumps(meta["config"]))
        params = {k[len("param/"):]: ad.parameter(z[k])
                  for k in z.files if k.startswith("param/")}
    return config, params


def params_digest(params: dict[str, Tensor]) -> str:
    """Content hash of all parameter values (frozen-backbone checks)."""
    import hashlib
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()
