"""A small convolutional encoder in plain numpy: forward, backprop, SGD.

Layout is NHWC throughout. The encoder is four 3x3 stride-2 ReLU conv
blocks, global average pooling to a `pooled` vector, then a two-layer
projection head whose output is L2-normalized. Linear evaluation consumes
`pooled`; the contrastive loss consumes the normalized head output.

Convolutions run as im2col matrix products; their backward pass scatters
column gradients back with one slice-add per kernel offset (stride 2 means
offsets never overlap themselves). Everything follows the dtype of the
parameter dict, so the same code runs float32 for training and float64 for
gradient checking.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError

_MAGIC = b"NCCKPT1\n"
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class EncoderArch:
    in_channels: int = 3
    conv_channels: tuple[int, ...] = (16, 32, 64, 128)
    hidden_dim: int = 128
    feat_dim: int = 64
    input_size: int = 64

    def validate(self) -> None:
        from .errors import ConfigError

        if len(self.conv_channels) < 1:
            raise ConfigError("at least one conv block is required")
        if self.input_size % (2 ** len(self.conv_channels)) != 0:
            raise ConfigError(
                f"input_size {self.input_size} is not divisible by the "
                f"total stride {2 ** len(self.conv_channels)}")
        if min(self.conv_channels) < 1 or self.hidden_dim < 1 or self.feat_dim < 1:
            raise ConfigError("layer widths must be positive")

    @property
    def pooled_dim(self) -> int:
        return self.conv_channels[-1]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        c_in = self.in_channels
        for i, c_out in enumerate(self.conv_channels):
            shapes[f"conv{i}_w"] = (3, 3, c_in, c_out)
            shapes[f"conv{i}_b"] = (c_out,)
            c_in = c_out
        shapes["head1_w"] = (self.pooled_dim, self.hidden_dim)
        shapes["head1_b"] = (self.hidden_dim,)
        shapes["head2_w"] = (self.hidden_dim, self.feat_dim)
        shapes["head2_b"] = (self.feat_dim,)
        return shapes


def init_params(arch: EncoderArch, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """He-initialized weights, zero biases."""
    arch.validate()
    params: dict[str, np.ndarray] = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            std = np.sqrt(2.0 / fan_in)
            params[name] = (rng.normal(0.0, std, size=shape)).astype(dtype)
    return params


def _conv_forward(x, w, b):
    """3x3 stride-2 pad-1 convolution; returns output and the im2col matrix."""
    n, h, _, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))   # (N, H, W, C, 3, 3)
    win = win[:, ::2, ::2]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, 9 * c)
    y = cols @ w.reshape(9 * c, -1) + b
    return y.reshape(n, ho, wo, -1), cols


def _conv_backward(grad_y, cols, w, x_shape, need_input_grad=True):
    """Gradients of a conv block given the flat output gradient."""
    n, h, wd, c = x_shape
    ho, wo = grad_y.shape[1], grad_y.shape[2]
    gflat = grad_y.reshape(n * ho * wo, -1)
    grad_b = gflat.sum(axis=0)
    grad_w = (cols.T @ gflat).reshape(3, 3, c, -1)
    if not need_input_grad:
        return grad_w, grad_b, None
    gcols = (gflat @ w.reshape(9 * c, -1).T).reshape(n, ho, wo, 3, 3, c)
    gpad = np.zeros((n, h + 2, wd + 2, c), dtype=grad_y.dtype)
    for ky in range(3):
        for kx in range(3):
            gpad[:, ky:ky + 2 * ho:2, kx:kx + 2 * wo:2] += gcols[:, :, :, ky, kx]
    return grad_w, grad_b, gpad[:, 1:-1, 1:-1]


def forward(params: dict, x: np.ndarray, arch: EncoderArch,
            need_tape: bool = True):
    """Run the encoder on (N, H, W, 3) float input in [0, 1].

    Returns (pooled, normalized features, tape); tape is None when
    `need_tape` is false, which skips bookkeeping for momentum-encoder and
    evaluation passes.
    """
    dtype = params["head2_w"].dtype
    if x.ndim != 4 or x.shape[1] != arch.input_size or x.shape[3] != arch.in_channels:
        raise ValueError(f"expected (N, {arch.input_size}, {arch.input_size}, "
                         f"{arch.in_channels}) input, got {x.shape}")
    h = x.astype(dtype, copy=False)
    conv_cols, conv_posts, conv_inputs = [], [], []
    for i in range(len(arch.conv_channels)):
        x_shape = h.shape
        y, cols = _conv_forward(h, params[f"conv{i}_w"], params[f"conv{i}_b"])
        h = np.maximum(y, 0.0)
        if need_tape:
            conv_inputs.append(x_shape)
            conv_cols.append(cols)
            conv_posts.append(h)
    pooled = h.mean(axis=(1, 2))
    a_pre = pooled @ params["head1_w"] + params["head1_b"]
    a = np.maximum(a_pre, 0.0)
    v = a @ params["head2_w"] + params["head2_b"]
    norms = np.sqrt((v * v).sum(axis=1))
    clamped = np.maximum(norms, _NORM_FLOOR)
    vhat = v / clamped[:, None]

    if not np.all(np.isfinite(vhat)):
        _raise_localized(params, x, arch)

    tape = None
    if need_tape:
        tape = {
            "conv_inputs": conv_inputs,
            "conv_cols": conv_cols,
            "conv_posts": conv_posts,
            "final_map": h.shape,
            "pooled": pooled,
            "a": a,
            "vhat": vhat,
            "clamped": clamped,
        }
    return pooled, vhat, tape


def _raise_localized(params, x, arch):
    """Re-run layer by layer to name where values first went non-finite."""
    h = x.astype(params["head2_w"].dtype, copy=False)
    for i in range(len(arch.conv_channels)):
        y, _ = _conv_forward(h, params[f"conv{i}_w"], params[f"conv{i}_b"])
        if not np.all(np.isfinite(y)):
            raise NumericError(f"non-finite activations in conv{i}")
        h = np.maximum(y, 0.0)
    pooled = h.mean(axis=(1, 2))
    a = np.maximum(pooled @ params["head1_w"] + params["head1_b"], 0.0)
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite activations in head1")
    v = a @ params["head2_w"] + params["head2_b"]
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite activations in head2")
    raise NumericError("non-finite activations in normalize")


def backward(params: dict, tape: dict, grad_vhat: np.ndarray,
             arch: EncoderArch) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every parameter, given the
    loss gradient at the normalized feature output."""
    vhat, clamped = tape["vhat"], tape["clamped"]
    inner = (grad_vhat * vhat).sum(axis=1, keepdims=True)
    grad_v = (grad_vhat - vhat * inner) / clamped[:, None]

    grads: dict[str, np.ndarray] = {}
    a = tape["a"]
    grads["head2_w"] = a.T @ grad_v
    grads["head2_b"] = grad_v.sum(axis=0)
    grad_a = grad_v @ params["head2_w"].T
    grad_a = np.where(a > 0.0, grad_a, 0.0)
    pooled = tape["pooled"]
    grads["head1_w"] = pooled.T @ grad_a
    grads["head1_b"] = grad_a.sum(axis=0)
    grad_pooled = grad_a @ params["head1_w"].T

    n, hf, wf, cf = tape["final_map"]
    grad_h = np.broadcast_to(
        grad_pooled[:, None, None, :] / (hf * wf), (n, hf, wf, cf)
    ).astype(grad_pooled.dtype)

    for i in reversed(range(len(arch.conv_channels))):
        post = tape["conv_posts"][i]
        grad_y = np.where(post > 0.0, grad_h, 0.0)
        grad_w, grad_b, grad_h = _conv_backward(
            grad_y, tape["conv_cols"][i], params[f"conv{i}_w"],
            tape["conv_inputs"][i], need_input_grad=(i > 0))
        grads[f"conv{i}_w"] = grad_w
        grads[f"conv{i}_b"] = grad_b
    return grads


def zero_velocity(params: dict) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def sgd_step(params: dict, grads: dict, velocity: dict, lr: float,
             momentum: float) -> tuple[dict, dict]:
    """Classic momentum: v <- m*v + g; p <- p - lr*v. Pure, returns new dicts."""
    new_v, new_p = {}, {}
    for k, p in params.items():
        v = momentum * velocity[k] + grads[k]
        new_v[k] = v
        new_p[k] = p - lr * v
    return new_p, new_v


# ---------------------------------------------------------------------------
# checkpoints


def save_params(path, params: dict, arch: EncoderArch) -> None:
    """Binary checkpoint: magic, JSON header, then raw little-endian tensor
    payloads in header order."""
    tensors = [{"name": k, "shape": list(v.shape), "dtype": str(v.dtype)}
               for k, v in params.items()]
    header = json.dumps({
        "arch": asdict(arch),
        "endianness": "little",
        "tensors": tensors,
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for k in params:
            arr = params[k]
            f.write(np.ascontiguousarray(arr,
                                         dtype=arr.dtype.newbyteorder("<")).tobytes())


def load_params(path) -> tuple[dict[str, np.ndarray], EncoderArch]:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path} is not an encoder checkpoint")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        arch_d = dict(header["arch"])
        arch_d["conv_channels"] = tuple(arch_d["conv_channels"])
        arch = EncoderArch(**arch_d)
        params = {}
        for spec in header["tensors"]:
            dtype = np.dtype(spec["dtype"]).newbyteorder("<")
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            raw = f.read(count * dtype.itemsize)
            arr = np.frombuffer(raw, dtype=dtype).reshape(spec["shape"])
            params[spec["name"]] = arr.astype(arr.dtype.newbyteorder("="))
        tail = f.read(1)
        if tail:
            raise ValueError(f"{path} has trailing bytes")
    return params, arch
