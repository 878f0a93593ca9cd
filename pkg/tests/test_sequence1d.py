"""1D sequence stages: channel graph attention, self/cross attention, heads."""

import numpy as np
import pytest

from panolayout.errors import ValidationError
from panolayout.sequence1d import (channel_adjacency, channel_graph_attend,
                                   cross_attend, depth_head, height_head,
                                   self_attend)

W, C = 24, 8


def test_identical_channels_collapse_to_zero(rng):
    col = rng.normal(size=(W, 1))
    seq = np.tile(col, (1, C))
    out, _ = channel_graph_attend(seq, rng.normal(size=(C, C)))
    assert np.linalg.norm(out) < 1e-10


def test_adjacency_rows_are_stochastic(rng):
    A = channel_adjacency(rng.normal(size=(W, C)))
    assert A.shape == (C, C)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(A) == 0.0)
    assert np.all(A >= 0.0)


def test_adjacency_two_orthogonal_channels(rng):
    # with exactly two channels each row's softmax has a single candidate,
    # so the adjacency is the exchange matrix regardless of the similarity
    q = np.zeros((4, 2))
    q[0, 0] = 1.0
    q[1, 1] = 1.0
    A = channel_adjacency(q)
    np.testing.assert_allclose(A, [[0.0, 1.0], [1.0, 0.0]], atol=1e-15)


def test_zero_norm_channel_is_isolated(rng):
    seq = rng.normal(size=(W, C))
    seq[:, 3] = 0.0
    out, vjp = channel_graph_attend(seq, np.eye(C))
    assert np.all(np.isfinite(out))
    (dseq, _) = vjp(np.ones_like(out))
    assert np.all(np.isfinite(dseq))


def test_graph_attend_validates_shapes(rng):
    with pytest.raises(ValidationError):
        channel_graph_attend(rng.normal(size=(W, C)), np.eye(C + 1))
    with pytest.raises(ValidationError):
        channel_graph_attend(rng.normal(size=(W,)), np.eye(C))


def test_self_attend_zero_value_path_is_identity(rng):
    seq = rng.normal(size=(W, C))
    wq, wk = rng.normal(size=(C, C)), rng.normal(size=(C, C))
    bq, bk = rng.normal(size=C), rng.normal(size=C)
    out, _ = self_attend(seq, wq, bq, wk, bk, np.zeros((C, C)), np.zeros(C))
    np.testing.assert_array_equal(out, seq)


def test_self_attend_residual_shifts_mean(rng):
    # uniform attention (zero q/k) adds the value-projected mean to each row
    seq = rng.normal(size=(W, C))
    wv, bv = rng.normal(size=(C, C)), rng.normal(size=C)
    zeros = np.zeros((C, C))
    out, _ = self_attend(seq, zeros, np.zeros(C), zeros, np.zeros(C), wv, bv)
    vmean = (seq @ wv + bv).mean(axis=0)
    np.testing.assert_allclose(out, seq + vmean[None, :], atol=1e-12)


def test_cross_attend_zero_donor_is_receiver_identity(rng):
    receiver = rng.normal(size=(W, C))
    donor = np.zeros((W, C))
    wq, bq = rng.normal(size=(C, C)), rng.normal(size=C)
    out, _ = cross_attend(receiver, donor, wq, bq,
                          rng.normal(size=(C, C)), np.zeros(C),
                          rng.normal(size=(C, C)), np.zeros(C))
    np.testing.assert_array_equal(out, receiver)


def test_cross_attend_uses_donor_values(rng):
    receiver = rng.normal(size=(W, C))
    donor = rng.normal(size=(W, C))
    zeros = np.zeros((C, C))
    out, _ = cross_attend(receiver, donor, zeros, np.zeros(C),
                          zeros, np.zeros(C), np.eye(C), np.zeros(C))
    np.testing.assert_allclose(out, receiver + donor.mean(axis=0)[None, :],
                               atol=1e-12)


def test_depth_head_softplus_unit(rng):
    seq = np.zeros((W, C))
    bias = np.array([np.log(np.e - 1.0)])
    depth, _ = depth_head(seq, np.zeros(C), bias)
    assert depth.shape == (W,)
    np.testing.assert_allclose(depth, 1.0, atol=1e-12)


def test_depth_head_is_positive(rng):
    seq = rng.normal(size=(W, C)) * 10
    depth, _ = depth_head(seq, rng.normal(size=C), rng.normal(size=1))
    assert np.all(depth > 0)


def test_height_head_scalar_from_sequence_mean(rng):
    seq = rng.normal(size=(W, C))
    w = rng.normal(size=C)
    b = np.array([0.3])
    height, _ = height_head(seq, w, b)
    want = np.logaddexp(0.0, seq.mean(axis=0) @ w + 0.3)
    assert height.flat[0] == pytest.approx(float(want), abs=1e-12)


def test_heads_accept_any_single_element_bias(rng):
    seq = rng.normal(size=(W, C))
    w = rng.normal(size=C)
    for bias in (0.1, np.array(0.1), np.array([0.1])):
        d1, _ = depth_head(seq, w, bias)
        np.testing.assert_allclose(d1, depth_head(seq, w, 0.1)[0])
    with pytest.raises(ValidationError):
        depth_head(seq, w, np.array([0.1, 0.2]))
