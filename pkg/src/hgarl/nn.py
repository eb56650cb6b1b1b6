"""Feed-forward networks with hand-written gradients and a binary snapshot format.

Parameters live in one flat float32 vector, ordered layer 0 weights (row-major,
shape ``(fan_in, fan_out)``), layer 0 biases, layer 1 weights, ...  The gradient
vectors returned by :func:`backward` use the same order, so optimizers and the
wire format never need to know about layers.

Arithmetic is carried out in float64; only storage is float32.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SOFTMAX = "softmax"
VALUE = "value"
HEAD_CODES = {SOFTMAX: 0, VALUE: 1}

MAGIC = b"HGRL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBB")


class DimensionError(ValueError):
    """Input or upstream gradient does not match the network's shape."""


class FormatError(ValueError):
    """A model snapshot could not be decoded."""


@dataclass(frozen=True)
class ActionDistribution:
    probs: np.ndarray
    log_probs: np.ndarray

    def __len__(self) -> int:
        return self.probs.shape[-1]


def _layer_sizes(layer_dims: Sequence[int]) -> list[tuple[int, int]]:
    return [(layer_dims[i], layer_dims[i + 1]) for i in range(len(layer_dims) - 1)]


class MlpModel:
    """Rectifier MLP with either a softmax-policy or a linear-value head."""

    def __init__(self, layer_dims: Sequence[int], head: str, params: np.ndarray | None = None):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError(f"layer_dims must hold >= 2 positive sizes, got {dims}")
        if head not in HEAD_CODES:
            raise ValueError(f"unknown head {head!r}")
        self.layer_dims = dims
        self.head = head
        n = sum(i * o + o for i, o in _layer_sizes(dims))
        if params is None:
            params = np.zeros(n, dtype=np.float32)
        params = np.ascontiguousarray(params, dtype=np.float32)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {params.shape}")
        self.params = params
        self._bind_views()

    def _bind_views(self) -> None:
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        off = 0
        for fan_in, fan_out in _layer_sizes(self.layer_dims):
            self.weights.append(self.params[off:off + fan_in * fan_out].reshape(fan_in, fan_out))
            off += fan_in * fan_out
            self.biases.append(self.params[off:off + fan_out])
            off += fan_out

    @classmethod
    def initialized(cls, layer_dims: Sequence[int], head: str, rng: np.random.Generator) -> "MlpModel":
        """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
        model = cls(layer_dims, head)
        for w, b in zip(model.weights, model.biases):
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return model

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_dims, self.head, self.params.copy())

    def set_params(self, flat: np.ndarray) -> None:
        self.params[...] = np.asarray(flat, dtype=np.float32)

    def same_architecture(self, other: "MlpModel") -> bool:
        return self.layer_dims == other.layer_dims and self.head == other.head

    def __repr__(self) -> str:
        return f"MlpModel(layer_dims={self.layer_dims}, head={self.head!r})"


def _as_batch(model: MlpModel, observation) -> tuple[np.ndarray, bool]:
    x = np.asarray(observation, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(
            f"observation shape {np.shape(observation)} does not match input dim {model.input_dim}")
    return x, single


def forward_cache(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Raw head output (logits or values) for a 2-D batch, plus the layer inputs."""
    inputs = [x]
    h = x
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.astype(np.float64) + b
        if k == last:
            return z, inputs
        h = np.maximum(z, 0.0)
        inputs.append(h)
    raise AssertionError("unreachable")


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(model: MlpModel, observation):
    """Evaluate ``model`` on one observation (1-D) or a batch (2-D).

    Softmax heads give an :class:`ActionDistribution`; value heads give the raw
    output vector (one entry for V-networks, one per action for Q-networks).
    """
    x, single = _as_batch(model, observation)
    z, _ = forward_cache(model, x)
    if single:
        z = z[0]
    if model.head == SOFTMAX:
        logp = log_softmax(z)
        return ActionDistribution(np.exp(logp), logp)
    return z


def backward_from_cache(model: MlpModel, inputs: list[np.ndarray], dz: np.ndarray) -> np.ndarray:
    """Parameter gradient given d(loss)/d(raw head output), summed over the batch."""
    grad = np.empty(model.n_params, dtype=np.float64)
    offsets = []
    off = 0
    for fan_in, fan_out in _layer_sizes(model.layer_dims):
        offsets.append(off)
        off += fan_in * fan_out + fan_out
    delta = dz
    for k in range(len(model.weights) - 1, -1, -1):
        a = inputs[k]
        w = model.weights[k]
        fan_in, fan_out = w.shape
        o = offsets[k]
        grad[o:o + fan_in * fan_out] = (a.T @ delta).ravel()
        grad[o + fan_in * fan_out:o + fan_in * fan_out + fan_out] = delta.sum(axis=0)
        if k:
            delta = (delta @ w.T.astype(np.float64)) * (a > 0.0)
    return grad


def backward_raw(model: MlpModel, observation, d_raw) -> np.ndarray:
    """Gradient of <raw head output, d_raw>; for softmax heads the raw output is the logits."""
    x, single = _as_batch(model, observation)
    d = np.asarray(d_raw, dtype=np.float64)
    if single:
        d = d[None, :] if d.ndim == 1 else d
    if d.shape != (x.shape[0], model.output_dim):
        raise DimensionError(f"upstream shape {np.shape(d_raw)} does not match output dim {model.output_dim}")
    _, inputs = forward_cache(model, x)
    return backward_from_cache(model, inputs, d)


def backward(model: MlpModel, observation, upstream_grad) -> np.ndarray:
    """Exact gradient of <head output, upstream_grad> w.r.t. all parameters.

    For softmax heads the head output is the probability vector.  Batched
    inputs return the gradient summed over rows.
    """
    x, single = _as_batch(model, observation)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if single and g.ndim == 1:
        g = g[None, :]
    if g.shape != (x.shape[0], model.output_dim):
        raise DimensionError(
            f"upstream shape {np.shape(upstream_grad)} does not match output dim {model.output_dim}")
    z, inputs = forward_cache(model, x)
    if model.head == SOFTMAX:
        p = np.exp(log_softmax(z))
        dz = p * (g - (g * p).sum(axis=1, keepdims=True))
    else:
        dz = g
    return backward_from_cache(model, inputs, dz)


def serialize(model: MlpModel) -> bytes:
    dims = model.layer_dims
    if len(dims) > 255:
        raise ValueError("too many layers for the snapshot format")
    body = bytearray(_HEADER.pack(MAGIC, FORMAT_VERSION, HEAD_CODES[model.head], len(dims)))
    body += struct.pack(f"<{len(dims)}I", *dims)
    body += model.params.astype("<f4").tobytes()
    return bytes(body) + struct.pack("<I", zlib.crc32(body))


def read_snapshot(data: bytes, offset: int = 0) -> tuple[MlpModel, int]:
    """Decode one snapshot starting at ``offset``; returns the model and the end offset."""
    view = memoryview(data)
    if len(view) - offset < _HEADER.size:
        if len(view) == offset:
            raise FormatError(f"empty snapshot at offset {offset}")
        raise FormatError(f"truncated header at offset {offset}")
    magic, version, head_code, n_layers = _HEADER.unpack_from(view, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {bytes(magic)!r} at offset {offset}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version} at offset {offset + 4}")
    heads = {v: k for k, v in HEAD_CODES.items()}
    if head_code not in heads:
        raise FormatError(f"unknown head kind {head_code} at offset {offset + 6}")
    pos = offset + _HEADER.size
    if n_layers < 2 or len(view) < pos + 4 * n_layers:
        raise FormatError(f"truncated or invalid layer table at offset {pos}")
    dims = struct.unpack_from(f"<{n_layers}I", view, pos)
    pos += 4 * n_layers
    if any(d == 0 for d in dims):
        raise FormatError(f"zero layer dimension at offset {offset + _HEADER.size}")
    n = sum(i * o + o for i, o in _layer_sizes(dims))
    end = pos + 4 * n
    if len(view) < end + 4:
        raise FormatError(f"truncated payload at offset {pos}: need {end + 4 - offset} bytes")
    params = np.frombuffer(view[pos:end], dtype="<f4").astype(np.float32)
    (crc,) = struct.unpack_from("<I", view, end)
    if crc != zlib.crc32(view[offset:end]):
        raise FormatError(f"CRC mismatch at offset {end}")
    return MlpModel(dims, heads[head_code], params), end + 4


def deserialize(data: bytes) -> MlpModel:
    model, end = read_snapshot(data)
    if end != len(data):
        raise FormatError(f"{len(data) - end} trailing bytes at offset {end}")
    return model
