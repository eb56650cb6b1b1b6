import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgarl.nn import (SOFTMAX, VALUE, DimensionError, FormatError, MlpModel, backward, deserialize, forward,
                      serialize)
from oracles import clear_of_kinks, fd_grad, rel_err


def random_model(rng, head, dims=None):
    dims = dims or [int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(2, 5))]
    return MlpModel.initialized(dims, head, rng)


def test_zero_softmax_is_uniform():
    m = MlpModel([3, 5, 4], SOFTMAX)
    dist = forward(m, np.array([0.3, -1.0, 2.0]))
    assert np.allclose(dist.probs, 0.25)
    assert np.allclose(dist.log_probs, math.log(0.25))


def test_zero_value_head_is_zero():
    m = MlpModel([3, 5, 1], VALUE)
    assert forward(m, np.ones(3))[0] == 0.0


def test_hand_evaluated_chain():
    # z0 = x W0 + b0 = [2, -1] -> relu [2, 0]; z1 = [2, 0] W1 + b1 = [2.5, 0]
    m = MlpModel([2, 2, 2], SOFTMAX)
    m.weights[0][...] = [[1.0, -1.0], [0.5, 2.0]]
    m.biases[0][...] = [0.0, -4.0]
    m.weights[1][...] = [[1.0, 0.0], [-1.0, 1.0]]
    m.biases[1][...] = [0.5, 0.0]
    x = np.array([1.0, 2.0])
    p0 = 1.0 / (1.0 + math.exp(-2.5))
    dist = forward(m, x)
    assert dist.probs == pytest.approx([p0, 1 - p0], abs=1e-12)
    v = MlpModel([2, 2, 2], VALUE, m.params.copy())
    assert forward(v, x) == pytest.approx([2.5, 0.0])


def test_forward_rejects_bad_dimension():
    m = MlpModel([3, 4, 2], SOFTMAX)
    with pytest.raises(DimensionError):
        forward(m, np.ones(4))
    with pytest.raises(DimensionError):
        backward(m, np.ones(3), np.ones(3))


def test_zero_upstream_gives_zero_gradient():
    rng = np.random.default_rng(0)
    m = random_model(rng, SOFTMAX)
    g = backward(m, rng.normal(size=m.input_dim), np.zeros(m.output_dim))
    assert np.all(g == 0)


@pytest.mark.parametrize("head", [SOFTMAX, VALUE])
def test_backward_matches_finite_differences(head):
    rng = np.random.default_rng(12 if head == SOFTMAX else 13)
    worst = 0.0
    trials = 0
    while trials < 100:
        m = random_model(rng, head)
        x = rng.normal(size=m.input_dim)
        if not clear_of_kinks(m, x):
            continue
        up = rng.normal(size=m.output_dim)
        analytic = backward(m, x, up)
        numeric = fd_grad(lambda: float(np.dot(_out(m, x), up)), m)
        worst = max(worst, rel_err(analytic, numeric).max())
        trials += 1
    assert worst <= 1e-3


def _out(m, x):
    out = forward(m, x)
    return out.probs if m.head == SOFTMAX else out


def test_softmax_component_gradient():
    rng = np.random.default_rng(3)
    m = random_model(rng, SOFTMAX, [3, 6, 4])
    x = rng.normal(size=3)
    while not clear_of_kinks(m, x):
        x = rng.normal(size=3)
    for a in range(4):
        up = np.eye(4)[a]
        numeric = fd_grad(lambda: float(forward(m, x).probs[a]), m)
        assert rel_err(backward(m, x, up), numeric).max() <= 1e-3


def test_batched_backward_is_sum_of_rows():
    rng = np.random.default_rng(4)
    m = random_model(rng, VALUE, [3, 5, 2])
    xs = rng.normal(size=(4, 3))
    ups = rng.normal(size=(4, 2))
    total = sum(backward(m, xs[i], ups[i]) for i in range(4))
    assert np.allclose(backward(m, xs, ups), total)


def test_softmax_normalized_and_forward_pure():
    rng = np.random.default_rng(5)
    for _ in range(200):
        m = random_model(rng, SOFTMAX)
        x = rng.normal(size=m.input_dim) * 3
        d1, d2 = forward(m, x), forward(m, x)
        assert abs(d1.probs.sum() - 1) <= 1e-6
        assert np.all((d1.probs > 0) & (d1.probs < 1))
        assert np.allclose(d1.log_probs, np.log(d1.probs), atol=1e-6)
        assert np.array_equal(d1.probs, d2.probs)


def test_serialization_round_trip_100_models():
    rng = np.random.default_rng(6)
    for _ in range(100):
        m = random_model(rng, SOFTMAX if rng.random() < 0.5 else VALUE)
        blob = serialize(m)
        back = deserialize(blob)
        assert back.layer_dims == m.layer_dims and back.head == m.head
        assert back.params.tobytes() == m.params.tobytes()
        assert serialize(back) == blob


def test_snapshot_header_layout():
    m = MlpModel([3, 2], VALUE)
    blob = serialize(m)
    assert blob[:4] == b"HGRL"
    assert int.from_bytes(blob[4:6], "little") == 1
    assert blob[6] == 1 and blob[7] == 2
    assert len(blob) == 8 + 2 * 4 + (3 * 2 + 2) * 4 + 4


def test_deserialize_errors():
    with pytest.raises(FormatError, match="empty"):
        deserialize(b"")
    blob = bytearray(serialize(MlpModel([3, 2], SOFTMAX)))
    bad = bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="offset 0"):
        deserialize(bad)
    wrong_version = bytes(blob[:4] + (7).to_bytes(2, "little") + blob[6:])
    with pytest.raises(FormatError, match="version"):
        deserialize(wrong_version)
    with pytest.raises(FormatError, match="truncated"):
        deserialize(bytes(blob[:-7]))
    flipped = bytearray(blob)
    flipped[20] ^= 0xFF
    with pytest.raises(FormatError, match="CRC"):
        deserialize(bytes(flipped))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 2**32 - 1))
def test_round_trip_property(dims, seed):
    m = MlpModel.initialized(dims, VALUE, np.random.default_rng(seed))
    assert deserialize(serialize(m)).params.tobytes() == m.params.tobytes()
