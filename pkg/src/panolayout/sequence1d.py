"""1D sequence reconstruction along the panorama columns.

The compressed horizontal/vertical plane features are [W', C] sequences, one
row per column longitude. Reconstruction runs a channel-relation graph
attention, then per-sequence self-attention, then cross-attention between the
two sequences, and finally the depth/height heads.

Residual conventions (documented here once): channel_graph_attend is the pure
relation map (I - A) Q W and its residual is added by the caller, so a fully
redundant sequence collapses to zero at the op level; self_attend and
cross_attend add their residual internally and return receiver + attended.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from . import ops


def _adjacency(seq: np.ndarray):
    """Row-stochastic channel adjacency with excluded diagonal, plus the
    pieces the graph-attend vjp needs (normalized columns, inverse norms)."""
    if seq.ndim != 2:
        raise ValidationError(f"seq must be [W', C], got {seq.shape}")
    if seq.shape[1] < 2:
        raise ValidationError("need at least 2 channels")
    norms = np.sqrt(np.sum(seq * seq, axis=0))
    safe = norms > 0.0
    inv = np.where(safe, 1.0 / np.where(safe, norms, 1.0), 0.0)
    qn = seq * inv[None, :]
    sims = qn.T @ qn
    att, att_vjp = ops.softmax_masked_diagonal(sims)
    return att, att_vjp, qn, inv


def channel_adjacency(seq: np.ndarray) -> np.ndarray:
    """The [C, C] adjacency used by channel_graph_attend: row softmax of
    channel cosine similarity, diagonal forced to zero, rows summing to 1."""
    return _adjacency(ops.as_tensor(seq))[0]


def channel_graph_attend(seq: np.ndarray, weight: np.ndarray):
    """Channel-relation cleanup: out = (I - A) seq W.

    A is the row softmax (diagonal excluded) of the cosine similarity between
    channel columns of seq [W', C]; weight is [C, C], no bias. A zero-norm
    channel has similarity 0 to everything. When all channels are identical
    the off-diagonal softmax is uniform and (I - A) seq is exactly zero.
    """
    seq = ops.as_tensor(seq)
    weight = ops.as_tensor(weight)
    if seq.ndim != 2:
        raise ValidationError(f"seq must be [W', C], got {seq.shape}")
    C = seq.shape[1]
    if weight.shape != (C, C):
        raise ValidationError(f"weight must be [{C},{C}], got {weight.shape}")

    att, att_vjp, qn, inv = _adjacency(seq)
    mixed = seq - seq @ att.T            # (I - A) along the channel relation
    out = mixed @ weight

    def vjp(g):
        dweight = mixed.T @ g
        dmixed = g @ weight.T
        dseq = dmixed - dmixed @ att
        datt = -(dmixed.T @ seq)
        dsims = att_vjp(datt)[0]
        dqn = qn @ (dsims + dsims.T)
        dot = np.sum(qn * dqn, axis=0)
        dseq = dseq + (dqn - qn * dot[None, :]) * inv[None, :]
        return dseq, dweight

    return out, vjp


def _linear(x, w, b):
    return x @ w + b[None, :]


def self_attend(seq: np.ndarray, wq, bq, wk, bk, wv, bv):
    """Single-head scaled dot-product self-attention with residual.

    out = seq + softmax(q k^T / sqrt(C)) v with q/k/v biased linear maps of
    seq [W', C]; the scale constant is the channel count.
    """
    seq = ops.as_tensor(seq)
    args = [ops.as_tensor(a) for a in (wq, bq, wk, bk, wv, bv)]
    wq, bq, wk, bk, wv, bv = args
    C = seq.shape[1]
    for w, b in ((wq, bq), (wk, bk), (wv, bv)):
        if w.shape != (C, C) or b.shape != (C,):
            raise ValidationError("attention maps must be [C,C] with [C] biases")
    q = _linear(seq, wq, bq)
    k = _linear(seq, wk, bk)
    v = _linear(seq, wv, bv)
    scores = q @ k.T / np.sqrt(C)
    att, att_vjp = ops.softmax(scores, axis=-1)
    out = seq + att @ v

    def vjp(g):
        datt = g @ v.T
        dv = att.T @ g
        dscores = att_vjp(datt)[0] / np.sqrt(C)
        dq = dscores @ k
        dk = dscores.T @ q
        dseq = g + dq @ wq.T + dk @ wk.T + dv @ wv.T
        return (dseq, seq.T @ dq, dq.sum(0), seq.T @ dk, dk.sum(0),
                seq.T @ dv, dv.sum(0))

    return out, vjp


def cross_attend(receiver: np.ndarray, donor: np.ndarray, wq, bq, wk, bk, wv, bv):
    """Cross-attention: the receiver queries the donor sequence, residual added.

    out = receiver + softmax(q k^T / sqrt(C)) v with q from the receiver and
    k, v from the donor. With a zero donor and zero k/v biases the attended
    term vanishes and the receiver passes through exactly.
    """
    receiver = ops.as_tensor(receiver)
    donor = ops.as_tensor(donor)
    args = [ops.as_tensor(a) for a in (wq, bq, wk, bk, wv, bv)]
    wq, bq, wk, bk, wv, bv = args
    if receiver.shape[1] != donor.shape[1]:
        raise ValidationError("receiver/donor channel mismatch")
    C = receiver.shape[1]
    q = _linear(receiver, wq, bq)
    k = _linear(donor, wk, bk)
    v = _linear(donor, wv, bv)
    scores = q @ k.T / np.sqrt(C)
    att, att_vjp = ops.softmax(scores, axis=-1)
    out = receiver + att @ v

    def vjp(g):
        datt = g @ v.T
        dv = att.T @ g
        dscores = att_vjp(datt)[0] / np.sqrt(C)
        dq = dscores @ k
        dk = dscores.T @ q
        drec = g + dq @ wq.T
        ddon = dk @ wk.T + dv @ wv.T
        return (drec, ddon, receiver.T @ dq, dq.sum(0), donor.T @ dk,
                dk.sum(0), donor.T @ dv, dv.sum(0))

    return out, vjp


def depth_head(seq: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Per-column horizon depth: softplus(seq w + b), [W'] of positives."""
    seq = ops.as_tensor(seq)
    weight = ops.as_tensor(weight)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.shape != (seq.shape[1],) or bias.size != 1:
        raise ValidationError("depth head wants weight [C] and a scalar bias")
    pre = seq @ weight + float(bias.flat[0])
    out, sp_vjp = ops.softplus(pre)

    def vjp(g):
        dpre = sp_vjp(g)[0]
        return (np.outer(dpre, weight), seq.T @ dpre,
                np.full(bias.shape, dpre.sum()))

    return out, vjp


def height_head(seq: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Room height: softplus of a linear read of the sequence mean, scalar.

    softplus(0) ~ 0.693 m at the zero-bias init; softplus(ln(e-1) ) == 1.
    """
    seq = ops.as_tensor(seq)
    weight = ops.as_tensor(weight)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.shape != (seq.shape[1],) or bias.size != 1:
        raise ValidationError("height head wants weight [C] and a scalar bias")
    m = seq.mean(axis=0)
    pre = float(m @ weight) + float(bias.flat[0])
    out, sp_vjp = ops.softplus(np.float64(pre))

    def vjp(g):
        dpre = float(np.sum(sp_vjp(g)[0]))
        W = seq.shape[0]
        dseq = np.broadcast_to(dpre * weight / W, seq.shape).copy()
        return dseq, dpre * m, np.full(bias.shape, dpre)

    return out, vjp
