"""Independent reference implementations used as test oracles.

Everything here is written with explicit Python loops and scalar math on
purpose: these functions share no code path with the package, so agreement
is meaningful. Keep shapes tiny when calling them.
"""

import math

import numpy as np


def ref_affine(x, weight, bias):
    """Triple-loop x @ weight + bias over the last axis of a 2-D or 3-D array."""
    x = np.asarray(x)
    lead = x.shape[:-1]
    nin, nout = weight.shape
    out = np.zeros(lead + (nout,))
    for idx in np.ndindex(*lead):
        for o in range(nout):
            acc = 0.0
            for i in range(nin):
                acc += float(x[idx][i]) * float(weight[i, o])
            if bias is not None:
                acc += float(bias[o])
            out[idx][o] = acc
    return out


def ref_layer_norm(x, gain, shift, eps):
    x = np.asarray(x)
    lead = x.shape[:-1]
    width = x.shape[-1]
    out = np.zeros_like(x)
    for idx in np.ndindex(*lead):
        row = [float(v) for v in x[idx]]
        mu = sum(row) / width
        var = sum((v - mu) ** 2 for v in row) / width
        denom = math.sqrt(var + eps)
        for i in range(width):
            out[idx][i] = float(gain[i]) * (row[i] - mu) / denom + float(shift[i])
    return out


def ref_sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def ref_swish(v):
    return v * ref_sigmoid(v)


def ref_softmax(row):
    m = max(row)
    exps = [math.exp(v - m) for v in row]
    total = sum(exps)
    return [e / total for e in exps]


def ref_attention(q, k, v, n_heads):
    """Loop-based frame-local multi-head attention.

    Heads are contiguous width slices; scale is 1/sqrt(head_dim).
    """
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    n, mq, da = q.shape
    mk = k.shape[1]
    dh = da // n_heads
    scale = 1.0 / math.sqrt(dh)
    out = np.zeros((n, mq, da))
    for f in range(n):
        for h in range(n_heads):
            lo, hi = h * dh, (h + 1) * dh
            for a in range(mq):
                scores = []
                for b in range(mk):
                    dot = sum(float(q[f, a, lo + i]) * float(k[f, b, lo + i])
                              for i in range(dh))
                    scores.append(dot * scale)
                probs = ref_softmax(scores)
                for i in range(dh):
                    out[f, a, lo + i] = sum(probs[b] * float(v[f, b, lo + i])
                                            for b in range(mk))
    return out


def ref_fuse(inputs, weights, config):
    """Straight-line scalar reference of the whole fusion pipeline.

    Reads arrays out of the package's containers but performs every
    computation with the loop-based helpers above.
    """
    t = config.toggles
    xv = np.asarray(inputs.visual.data)
    xs = np.asarray(inputs.spatial.data)
    xc = np.asarray(inputs.camera.data)
    n, mv, dv = xv.shape
    ms = xs.shape[1]
    ds = xs.shape[2]
    da = config.d_attn

    w = weights
    q = ref_affine(ref_layer_norm(xv, w.ln_v.gain, w.ln_v.shift, w.ln_v.epsilon),
                   w.p_q.weight, w.p_q.bias)
    lns = ref_layer_norm(xs, w.ln_s.gain, w.ln_s.shift, w.ln_s.epsilon)
    k = ref_affine(lns, w.p_k.weight, w.p_k.bias)
    v = ref_affine(lns, w.p_v.weight, w.p_v.bias)
    c = ref_affine(xc, w.p_c.weight, w.p_c.bias)

    if t.geo_bias:
        gin = np.zeros((n, ms, 2 * ds))
        for f in range(n):
            for m in range(ms):
                for i in range(ds):
                    gin[f, m, i] = xs[f, m, i]
                    gin[f, m, ds + i] = xc[f, 0, i]
        hidden = ref_affine(gin, w.geo_mlp[0].weight, w.geo_mlp[0].bias)
        for idx in np.ndindex(*hidden.shape):
            hidden[idx] = ref_swish(float(hidden[idx]))
        bias = ref_affine(hidden, w.geo_mlp[1].weight, w.geo_mlp[1].bias)
        k = k + bias
        v = v + bias

    if t.token_weight:
        th = ref_affine(xs, w.tw_mlp[0].weight, w.tw_mlp[0].bias)
        for idx in np.ndindex(*th.shape):
            th[idx] = ref_swish(float(th[idx]))
        tz = ref_affine(th, w.tw_mlp[1].weight, w.tw_mlp[1].bias)
        for f in range(n):
            for m in range(ms):
                weight = ref_sigmoid(float(tz[f, m, 0]))
                for i in range(da):
                    v[f, m, i] *= weight

    if t.camera_memory:
        kmem = np.zeros((n, ms + 1, da))
        vmem = np.zeros((n, ms + 1, da))
        for f in range(n):
            kmem[f, 0] = c[f, 0]
            vmem[f, 0] = c[f, 0]
            for m in range(ms):
                kmem[f, m + 1] = k[f, m]
                vmem[f, m + 1] = v[f, m]
    else:
        kmem, vmem = k, v

    fhat = ref_attention(q, kmem, vmem, config.n_heads)
    proj = ref_layer_norm(ref_affine(fhat, w.p_o.weight, w.p_o.bias),
                          w.ln_o.gain, w.ln_o.shift, w.ln_o.epsilon)
    mapped = ref_affine(proj, w.p_l.weight, w.p_l.bias)

    out = np.zeros((n, mv, dv))
    if t.gate:
        for f in range(n):
            u = [sum(float(c[f, 0, a]) * float(w.p_g1.weight[a, i]) for a in range(da))
                 + float(w.p_g1.bias[i]) for i in range(dv)]
            vg = [sum(float(c[f, 0, a]) * float(w.p_g2.weight[a, i]) for a in range(da))
                  + float(w.p_g2.bias[i]) for i in range(dv)]
            gate = [ref_swish(u[i]) * vg[i] for i in range(dv)]
            for m in range(mv):
                for i in range(dv):
                    out[f, m, i] = mapped[f, m, i] * gate[i] + xv[f, m, i]
    else:
        for f in range(n):
            for m in range(mv):
                for i in range(dv):
                    out[f, m, i] = mapped[f, m, i] + xv[f, m, i]
    return out
