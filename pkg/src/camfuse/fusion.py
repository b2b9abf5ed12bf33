"""Camera-guided fusion of visual and spatial token streams.

Per frame, visual tokens cross-attend over spatial tokens plus one camera
memory slot, with three camera-conditioned controls layered on top:

* geo bias -- an MLP over each spatial token concatenated with its frame's
  camera embedding, added to both attention keys and values;
* token weights -- a sigmoid MLP over spatial tokens giving each a
  query-independent importance in (0, 1) that rescales the values;
* gate -- a SwiGLU-style gate computed from the camera embedding that
  scales the projected attention output before the residual with the
  visual stream.

Each control has a config toggle so structural variants can be compared on
identical inputs. `fuse_backward` returns analytic gradients for every
parameter and input stream; `camfuse.gradcheck` holds the independent
finite-difference harness that validates them.

The output always has the visual stream's shape, so the module can sit in
front of a downstream consumer without changing its interface.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .tensor import (
    DimensionError,
    LayerNormParams,
    LinearMap,
    TokenTensor,
    _affine_raw,
    _affine_vjp_raw,
    _layer_norm_raw,
    _layer_norm_vjp_raw,
    _softmax_vjp_from_probs,
    sigmoid,
    softmax_rows,
    swish,
    swish_vjp,
)

__all__ = [
    "ConfigError",
    "FusionToggles",
    "FusionConfig",
    "FusionWeights",
    "FusionInputs",
    "init_weights",
    "param_shapes",
    "param_count",
    "iter_params",
    "weights_from_arrays",
    "project_qkvc",
    "geo_bias",
    "token_weights",
    "attend",
    "gate_and_fuse",
    "fuse",
    "fuse_backward",
]


class ConfigError(ValueError):
    """Invalid fusion configuration."""


@dataclass(frozen=True)
class FusionToggles:
    """Structural variant switches; all enabled is the full module."""

    geo_bias: bool = True
    token_weight: bool = True
    camera_memory: bool = True
    gate: bool = True


@dataclass(frozen=True)
class FusionConfig:
    n_frames: int
    m_visual: int
    m_spatial: int
    d_visual: int
    d_spatial: int
    d_attn: int
    n_heads: int = 8
    toggles: FusionToggles = FusionToggles()

    def __post_init__(self):
        for name in ("n_frames", "m_visual", "d_visual", "d_spatial", "d_attn", "n_heads"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"config field '{name}': expected positive int, got {value!r}")
        if not isinstance(self.m_spatial, int) or self.m_spatial < 0:
            raise ConfigError(
                f"config field 'm_spatial': expected non-negative int, got {self.m_spatial!r}"
            )
        if self.m_spatial == 0 and not self.toggles.camera_memory:
            raise ConfigError(
                "m_spatial == 0 requires the camera memory slot; attention over "
                "empty memory is undefined"
            )
        if self.d_attn % self.n_heads != 0:
            raise ConfigError(
                f"d_attn ({self.d_attn}) must be divisible by n_heads ({self.n_heads})"
            )

    @property
    def head_dim(self) -> int:
        return self.d_attn // self.n_heads


@dataclass(frozen=True)
class FusionWeights:
    """All learnable parameters of the fusion module.

    Also doubles as the container for parameter gradients, which mirror the
    parameter structure exactly.
    """

    ln_v: LayerNormParams
    ln_s: LayerNormParams
    p_q: LinearMap
    p_k: LinearMap
    p_v: LinearMap
    p_c: LinearMap
    geo_mlp: tuple[LinearMap, LinearMap]
    tw_mlp: tuple[LinearMap, LinearMap]
    p_o: LinearMap
    ln_o: LayerNormParams
    p_l: LinearMap
    p_g1: LinearMap
    p_g2: LinearMap


@dataclass(frozen=True)
class FusionInputs:
    """One batch of per-frame token streams.

    `register` carries the spatial encoder's four auxiliary tokens per frame;
    fusion drops them, but they are kept here so the discard path is real.
    """

    visual: TokenTensor
    spatial: TokenTensor
    camera: TokenTensor
    register: TokenTensor | None = None

    def __post_init__(self):
        if not (self.visual.frames == self.spatial.frames == self.camera.frames):
            raise DimensionError(
                "frame counts disagree: visual "
                f"{self.visual.frames}, spatial {self.spatial.frames}, "
                f"camera {self.camera.frames}"
            )
        if self.camera.tokens != 1:
            raise DimensionError(f"camera stream must have 1 token, got {self.camera.tokens}")
        if self.camera.width != self.spatial.width:
            raise DimensionError(
                f"camera width {self.camera.width} != spatial width {self.spatial.width}"
            )
        if self.register is not None:
            if self.register.frames != self.visual.frames:
                raise DimensionError("register frame count disagrees with the other streams")
            if self.register.tokens != 4 or self.register.width != self.spatial.width:
                raise DimensionError(
                    f"register stream must be [frames, 4, {self.spatial.width}], "
                    f"got {self.register.shape}"
                )

    @property
    def frames(self) -> int:
        return self.visual.frames


# ---------------------------------------------------------------------------
# parameter layout
# ---------------------------------------------------------------------------

def _param_layout(config: FusionConfig) -> list[tuple[str, tuple[int, ...]]]:
    dv, ds, da = config.d_visual, config.d_spatial, config.d_attn

    def lin(name, nin, nout):
        return [(f"{name}.weight", (nin, nout)), (f"{name}.bias", (nout,))]

    def ln(name, width):
        return [(f"{name}.gain", (width,)), (f"{name}.shift", (width,))]

    layout: list[tuple[str, tuple[int, ...]]] = []
    layout += ln("ln_v", dv) + ln("ln_s", ds)
    layout += lin("p_q", dv, da) + lin("p_k", ds, da) + lin("p_v", ds, da) + lin("p_c", ds, da)
    layout += lin("geo_mlp.0", 2 * ds, da) + lin("geo_mlp.1", da, da)
    layout += lin("tw_mlp.0", ds, da) + lin("tw_mlp.1", da, 1)
    layout += lin("p_o", da, da) + ln("ln_o", da)
    layout += lin("p_l", da, dv)
    layout += lin("p_g1", da, dv) + lin("p_g2", da, dv)
    return layout


def param_shapes(config: FusionConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape map of every learnable array."""
    return dict(_param_layout(config))


def param_count(config: FusionConfig) -> int:
    """Total number of scalar parameters for a config."""
    return sum(int(np.prod(shape)) for _, shape in _param_layout(config))


def iter_params(weights: FusionWeights):
    """Yield (name, array) for every learnable array, in canonical order."""
    for name, node in (
        ("ln_v", weights.ln_v),
        ("ln_s", weights.ln_s),
        ("p_q", weights.p_q),
        ("p_k", weights.p_k),
        ("p_v", weights.p_v),
        ("p_c", weights.p_c),
        ("geo_mlp.0", weights.geo_mlp[0]),
        ("geo_mlp.1", weights.geo_mlp[1]),
        ("tw_mlp.0", weights.tw_mlp[0]),
        ("tw_mlp.1", weights.tw_mlp[1]),
        ("p_o", weights.p_o),
        ("ln_o", weights.ln_o),
        ("p_l", weights.p_l),
        ("p_g1", weights.p_g1),
        ("p_g2", weights.p_g2),
    ):
        if isinstance(node, LinearMap):
            yield f"{name}.weight", node.weight
            if node.bias is not None:
                yield f"{name}.bias", node.bias
        else:
            yield f"{name}.gain", node.gain
            yield f"{name}.shift", node.shift


def weights_from_arrays(arrays, epsilons=None) -> FusionWeights:
    """Assemble FusionWeights from a name -> array mapping (see iter_params)."""
    eps = dict(epsilons or {})

    def lin(name):
        return LinearMap(arrays[f"{name}.weight"], arrays.get(f"{name}.bias"))

    def ln(name):
        return LayerNormParams(arrays[f"{name}.gain"], arrays[f"{name}.shift"], eps.get(name, 1e-6))

    return FusionWeights(
        ln_v=ln("ln_v"),
        ln_s=ln("ln_s"),
        p_q=lin("p_q"),
        p_k=lin("p_k"),
        p_v=lin("p_v"),
        p_c=lin("p_c"),
        geo_mlp=(lin("geo_mlp.0"), lin("geo_mlp.1")),
        tw_mlp=(lin("tw_mlp.0"), lin("tw_mlp.1")),
        p_o=lin("p_o"),
        ln_o=ln("ln_o"),
        p_l=lin("p_l"),
        p_g1=lin("p_g1"),
        p_g2=lin("p_g2"),
    )


def init_weights(config: FusionConfig, seed: int, *, identity_init: bool = False) -> FusionWeights:
    """Seeded initialization: weights ~ N(0, 1/in_width), biases zero, LN identity.

    With identity_init the final visual projection (p_l) is zeroed, so the
    module starts out as an exact no-op on the visual stream.
    """
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in _param_layout(config):
        if name.endswith(".weight"):
            arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        elif name.endswith(".bias") or name.endswith(".shift"):
            arrays[name] = np.zeros(shape)
        else:  # .gain
            arrays[name] = np.ones(shape)
    if identity_init:
        arrays["p_l.weight"] = np.zeros_like(arrays["p_l.weight"])
        arrays["p_l.bias"] = np.zeros_like(arrays["p_l.bias"])
    return weights_from_arrays(arrays)


# ---------------------------------------------------------------------------
# forward stages
# ---------------------------------------------------------------------------

def _check_inputs(inputs: FusionInputs, config: FusionConfig) -> None:
    expected = {
        "visual": (config.n_frames, config.m_visual, config.d_visual),
        "spatial": (config.n_frames, config.m_spatial, config.d_spatial),
        "camera": (config.n_frames, 1, config.d_spatial),
    }
    for name, shape in expected.items():
        actual = getattr(inputs, name).shape
        if actual != shape:
            raise DimensionError(f"{name} stream has shape {actual}, config expects {shape}")


def project_qkvc(inputs: FusionInputs, weights: FusionWeights):
    """Project the three streams into the shared attention space.

    Visual and spatial tokens are layer-normalized first; the camera token is
    projected raw.
    """
    q = _affine_raw(_layer_norm_raw(inputs.visual.data, weights.ln_v), weights.p_q)
    lns = _layer_norm_raw(inputs.spatial.data, weights.ln_s)
    k = _affine_raw(lns, weights.p_k)
    v = _affine_raw(lns, weights.p_v)
    c = _affine_raw(inputs.camera.data, weights.p_c)
    return TokenTensor(q), TokenTensor(k), TokenTensor(v), TokenTensor(c)


def _geo_input(xs: np.ndarray, xc: np.ndarray) -> np.ndarray:
    """Concatenate each spatial token with its frame's camera row along width."""
    cam = np.broadcast_to(xc, (xs.shape[0], xs.shape[1], xc.shape[2]))
    return np.concatenate([xs, cam], axis=-1)


def geo_bias(spatial: TokenTensor, camera: TokenTensor, weights: FusionWeights) -> TokenTensor:
    """Camera-conditioned bias over spatial tokens, added to keys and values."""
    gin = _geo_input(spatial.data, camera.data)
    hidden = swish(_affine_raw(gin, weights.geo_mlp[0]))
    return TokenTensor(_affine_raw(hidden, weights.geo_mlp[1]))


def token_weights(spatial: TokenTensor, weights: FusionWeights) -> TokenTensor:
    """Query-independent importance in (0,1) for each spatial token."""
    hidden = swish(_affine_raw(spatial.data, weights.tw_mlp[0]))
    return TokenTensor(sigmoid(_affine_raw(hidden, weights.tw_mlp[1])))


def _attention_raw(q: np.ndarray, k: np.ndarray, v: np.ndarray, n_heads: int,
                   keep_cache: bool = False):
    """Frame-local multi-head scaled dot-product attention.

    Heads are contiguous width slices; scale is 1/sqrt(head_dim). Frames are
    processed in a fixed order so results are deterministic and memory stays
    bounded by one frame's score matrix.
    """
    n, mq, da = q.shape
    mk = k.shape[1]
    dh = da // n_heads
    scale = 1.0 / np.sqrt(dh)
    out = np.empty_like(q)
    probs_cache = np.empty((n, n_heads, mq, mk), dtype=q.dtype) if keep_cache else None
    for i in range(n):
        qh = q[i].reshape(mq, n_heads, dh).transpose(1, 0, 2)  # [h, mq, dh]
        kh = k[i].reshape(mk, n_heads, dh).transpose(1, 0, 2)
        vh = v[i].reshape(mk, n_heads, dh).transpose(1, 0, 2)
        scores = (qh @ kh.transpose(0, 2, 1)) * scale          # [h, mq, mk]
        probs = softmax_rows(scores)
        outh = probs @ vh                                      # [h, mq, dh]
        out[i] = outh.transpose(1, 0, 2).reshape(mq, da)
        if keep_cache:
            probs_cache[i] = probs
    return out, probs_cache


def _attention_vjp_raw(q, k, v, probs, n_heads, g_out):
    n, mq, da = q.shape
    mk = k.shape[1]
    dh = da // n_heads
    scale = 1.0 / np.sqrt(dh)
    gq = np.empty_like(q)
    gk = np.empty_like(k)
    gv = np.empty_like(v)
    for i in range(n):
        qh = q[i].reshape(mq, n_heads, dh).transpose(1, 0, 2)
        kh = k[i].reshape(mk, n_heads, dh).transpose(1, 0, 2)
        vh = v[i].reshape(mk, n_heads, dh).transpose(1, 0, 2)
        goh = g_out[i].reshape(mq, n_heads, dh).transpose(1, 0, 2)
        p = probs[i]
        g_probs = goh @ vh.transpose(0, 2, 1)                  # [h, mq, mk]
        g_vh = p.transpose(0, 2, 1) @ goh                      # [h, mk, dh]
        g_scores = _softmax_vjp_from_probs(p, g_probs)
        g_qh = (g_scores @ kh) * scale
        g_kh = (g_scores.transpose(0, 2, 1) @ qh) * scale
        gq[i] = g_qh.transpose(1, 0, 2).reshape(mq, da)
        gk[i] = g_kh.transpose(1, 0, 2).reshape(mk, da)
        gv[i] = g_vh.transpose(1, 0, 2).reshape(mk, da)
    return gq, gk, gv


def attend(q: TokenTensor, k: TokenTensor, v: TokenTensor, c: TokenTensor,
           config: FusionConfig) -> TokenTensor:
    """Visual queries attend over spatial memory, prepended with the camera
    slot when camera_memory is enabled."""
    if config.toggles.camera_memory:
        kmem = np.concatenate([c.data, k.data], axis=1)
        vmem = np.concatenate([c.data, v.data], axis=1)
    else:
        kmem, vmem = k.data, v.data
    if kmem.shape[1] == 0:
        raise DimensionError(
            "attention memory is empty: no spatial tokens and camera memory disabled"
        )
    out, _ = _attention_raw(q.data, kmem, vmem, config.n_heads)
    return TokenTensor(out)


def gate_and_fuse(attended: TokenTensor, c: TokenTensor, visual: TokenTensor,
                  weights: FusionWeights, config: FusionConfig) -> TokenTensor:
    """Project the attention output back to visual width, gate it with the
    camera embedding, and add the visual residual."""
    proj = _layer_norm_raw(_affine_raw(attended.data, weights.p_o), weights.ln_o)
    mapped = _affine_raw(proj, weights.p_l)
    if config.toggles.gate:
        cbar = c.data[:, 0, :]
        u = _affine_raw(cbar, weights.p_g1)
        v = _affine_raw(cbar, weights.p_g2)
        gate = swish(u) * v
        out = mapped * gate[:, None, :] + visual.data
    else:
        out = mapped + visual.data
    return TokenTensor(out)


def fuse(inputs: FusionInputs, weights: FusionWeights, config: FusionConfig,
         timings: dict | None = None) -> TokenTensor:
    """Full fusion pipeline; output shape equals the visual stream's shape.

    When a `timings` dict is passed, per-stage wall times (seconds) are
    recorded into it.
    """
    _check_inputs(inputs, config)
    t = config.toggles

    def tick():
        return time.perf_counter() if timings is not None else 0.0

    t0 = tick()
    q, k, v, c = project_qkvc(inputs, weights)
    t1 = tick()
    if t.geo_bias:
        bias = geo_bias(inputs.spatial, inputs.camera, weights)
        k = TokenTensor(k.data + bias.data)
        v = TokenTensor(v.data + bias.data)
    t2 = tick()
    if t.token_weight:
        v = TokenTensor(v.data * token_weights(inputs.spatial, weights).data)
    t3 = tick()
    attended = attend(q, k, v, c, config)
    t4 = tick()
    out = gate_and_fuse(attended, c, inputs.visual, weights, config)
    if timings is not None:
        timings["project"] = t1 - t0
        timings["geo_bias"] = t2 - t1
        timings["token_weight"] = t3 - t2
        timings["attend"] = t4 - t3
        timings["gate_fuse"] = tick() - t4
    return out


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def fuse_backward(inputs: FusionInputs, weights: FusionWeights, config: FusionConfig,
                  cotangent: TokenTensor):
    """Analytic gradients of ``<cotangent, fuse(inputs)>``.

    Returns (input_grads, weight_grads): a FusionInputs holding gradients for
    the visual/spatial/camera streams and a FusionWeights holding a gradient
    array per parameter. Disabled branches contribute zero gradients of the
    right shape.
    """
    _check_inputs(inputs, config)
    if cotangent.shape != inputs.visual.shape:
        raise DimensionError(
            f"cotangent shape {cotangent.shape} != visual shape {inputs.visual.shape}"
        )
    t = config.toggles
    w = weights
    xv, xs, xc = inputs.visual.data, inputs.spatial.data, inputs.camera.data

    # forward recompute, mirroring fuse() stage by stage
    lnv = _layer_norm_raw(xv, w.ln_v)
    q = _affine_raw(lnv, w.p_q)
    lns = _layer_norm_raw(xs, w.ln_s)
    k0 = _affine_raw(lns, w.p_k)
    v0 = _affine_raw(lns, w.p_v)
    c = _affine_raw(xc, w.p_c)

    if t.geo_bias:
        gin = _geo_input(xs, xc)
        gh = _affine_raw(gin, w.geo_mlp[0])
        ga = swish(gh)
        bg = _affine_raw(ga, w.geo_mlp[1])
        k1, v1 = k0 + bg, v0 + bg
    else:
        k1, v1 = k0, v0

    if t.token_weight:
        th = _affine_raw(xs, w.tw_mlp[0])
        ta = swish(th)
        tz = _affine_raw(ta, w.tw_mlp[1])
        tw = sigmoid(tz)
        v2 = v1 * tw
    else:
        v2 = v1

    if t.camera_memory:
        kmem = np.concatenate([c, k1], axis=1)
        vmem = np.concatenate([c, v2], axis=1)
    else:
        kmem, vmem = k1, v2
    if kmem.shape[1] == 0:
        raise DimensionError(
            "attention memory is empty: no spatial tokens and camera memory disabled"
        )
    fhat, probs = _attention_raw(q, kmem, vmem, config.n_heads, keep_cache=True)

    p = _affine_raw(fhat, w.p_o)
    fproj = _layer_norm_raw(p, w.ln_o)
    mapped = _affine_raw(fproj, w.p_l)
    if t.gate:
        cbar = c[:, 0, :]
        u = _affine_raw(cbar, w.p_g1)
        vg = _affine_raw(cbar, w.p_g2)
        su = swish(u)
        gate = su * vg

    # reverse pass
    g_out = cotangent.data
    g_xv = g_out.copy()  # residual path
    g_c = np.zeros_like(c)
    if t.gate:
        g_mapped = g_out * gate[:, None, :]
        g_gate = np.einsum("nmd,nmd->nd", g_out, mapped)
        g_su = g_gate * vg
        g_vg = g_gate * su
        g_u = swish_vjp(u, g_su)
        g_cbar1, gw_g1, gb_g1 = _affine_vjp_raw(cbar, w.p_g1, g_u)
        g_cbar2, gw_g2, gb_g2 = _affine_vjp_raw(cbar, w.p_g2, g_vg)
        g_c[:, 0, :] += g_cbar1 + g_cbar2
    else:
        g_mapped = g_out
        gw_g1 = np.zeros_like(w.p_g1.weight)
        gb_g1 = np.zeros_like(w.p_g1.bias) if w.p_g1.bias is not None else None
        gw_g2 = np.zeros_like(w.p_g2.weight)
        gb_g2 = np.zeros_like(w.p_g2.bias) if w.p_g2.bias is not None else None

    g_fproj, gw_l, gb_l = _affine_vjp_raw(fproj, w.p_l, g_mapped)
    g_p, ggain_o, gshift_o = _layer_norm_vjp_raw(p, w.ln_o, g_fproj)
    g_fhat, gw_o, gb_o = _affine_vjp_raw(fhat, w.p_o, g_p)

    g_q, g_kmem, g_vmem = _attention_vjp_raw(q, kmem, vmem, probs, config.n_heads, g_fhat)
    if t.camera_memory:
        g_c += g_kmem[:, :1, :] + g_vmem[:, :1, :]
        g_k1 = g_kmem[:, 1:, :]
        g_v2 = g_vmem[:, 1:, :]
    else:
        g_k1, g_v2 = g_kmem, g_vmem

    g_xs = np.zeros_like(xs)
    g_xc = np.zeros_like(xc)

    if t.token_weight:
        g_v1 = g_v2 * tw
        g_tw = (g_v2 * v1).sum(axis=-1, keepdims=True)
        g_tz = g_tw * tw * (1.0 - tw)
        g_ta, gw_t1, gb_t1 = _affine_vjp_raw(ta, w.tw_mlp[1], g_tz)
        g_th = swish_vjp(th, g_ta)
        g_xs_tw, gw_t0, gb_t0 = _affine_vjp_raw(xs, w.tw_mlp[0], g_th)
        g_xs += g_xs_tw
    else:
        g_v1 = g_v2
        gw_t0 = np.zeros_like(w.tw_mlp[0].weight)
        gb_t0 = np.zeros_like(w.tw_mlp[0].bias) if w.tw_mlp[0].bias is not None else None
        gw_t1 = np.zeros_like(w.tw_mlp[1].weight)
        gb_t1 = np.zeros_like(w.tw_mlp[1].bias) if w.tw_mlp[1].bias is not None else None

    if t.geo_bias:
        g_bg = g_k1 + g_v1
        g_k0, g_v0 = g_k1, g_v1
        g_ga, gw_geo1, gb_geo1 = _affine_vjp_raw(ga, w.geo_mlp[1], g_bg)
        g_gh = swish_vjp(gh, g_ga)
        g_gin, gw_geo0, gb_geo0 = _affine_vjp_raw(gin, w.geo_mlp[0], g_gh)
        ds = xs.shape[2]
        g_xs += g_gin[..., :ds]
        g_xc += g_gin[..., ds:].sum(axis=1, keepdims=True)
    else:
        g_k0, g_v0 = g_k1, g_v1
        gw_geo0 = np.zeros_like(w.geo_mlp[0].weight)
        gb_geo0 = np.zeros_like(w.geo_mlp[0].bias) if w.geo_mlp[0].bias is not None else None
        gw_geo1 = np.zeros_like(w.geo_mlp[1].weight)
        gb_geo1 = np.zeros_like(w.geo_mlp[1].bias) if w.geo_mlp[1].bias is not None else None

    g_lns_k, gw_k, gb_k = _affine_vjp_raw(lns, w.p_k, g_k0)
    g_lns_v, gw_v, gb_v = _affine_vjp_raw(lns, w.p_v, g_v0)
    g_xs_ln, ggain_s, gshift_s = _layer_norm_vjp_raw(xs, w.ln_s, g_lns_k + g_lns_v)
    g_xs += g_xs_ln

    g_xc_c, gw_c, gb_c = _affine_vjp_raw(xc, w.p_c, g_c)
    g_xc += g_xc_c

    g_lnv, gw_q, gb_q = _affine_vjp_raw(lnv, w.p_q, g_q)
    g_xv_ln, ggain_v, gshift_v = _layer_norm_vjp_raw(xv, w.ln_v, g_lnv)
    g_xv += g_xv_ln

    input_grads = FusionInputs(
        visual=TokenTensor(g_xv),
        spatial=TokenTensor(g_xs),
        camera=TokenTensor(g_xc),
    )
    weight_grads = FusionWeights(
        ln_v=LayerNormParams(ggain_v, gshift_v, w.ln_v.epsilon),
        ln_s=LayerNormParams(ggain_s, gshift_s, w.ln_s.epsilon),
        p_q=LinearMap(gw_q, gb_q),
        p_k=LinearMap(gw_k, gb_k),
        p_v=LinearMap(gw_v, gb_v),
        p_c=LinearMap(gw_c, gb_c),
        geo_mlp=(LinearMap(gw_geo0, gb_geo0), LinearMap(gw_geo1, gb_geo1)),
        tw_mlp=(LinearMap(gw_t0, gb_t0), LinearMap(gw_t1, gb_t1)),
        p_o=LinearMap(gw_o, gb_o),
        ln_o=LayerNormParams(ggain_o, gshift_o, w.ln_o.epsilon),
        p_l=LinearMap(gw_l, gb_l),
        p_g1=LinearMap(gw_g1, gb_g1),
        p_g2=LinearMap(gw_g2, gb_g2),
    )
    return input_grads, weight_grads


def variant_toggles(name: str) -> FusionToggles:
    """Named structural variants used by the ablation runner."""
    table = {
        "shallow": FusionToggles(geo_bias=False, token_weight=False,
                                 camera_memory=True, gate=False),
        "token-weight": FusionToggles(geo_bias=False, token_weight=True,
                                      camera_memory=True, gate=False),
        "geo-bias": FusionToggles(geo_bias=True, token_weight=True,
                                  camera_memory=True, gate=False),
        "full": FusionToggles(),
    }
    try:
        return table[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; expected one of {sorted(table)}") from None


def with_toggles(config: FusionConfig, toggles: FusionToggles) -> FusionConfig:
    """Copy of `config` with a different toggle set."""
    return replace(config, toggles=toggles)
