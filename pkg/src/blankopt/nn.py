"""Neural building blocks shared by the auto-decoder and the field surrogate.

Autodiff, convolutions and batch norm come from torch.  This module adds the
layer-size arithmetic, the residual squeeze-excitation block, the combined
MSE/cosine loss, an Adam optimiser that names the offending parameter when a
gradient goes non-finite, seeded initialisation and the ``NNCK`` checkpoint
format.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

SDF_SCALE = 100.0  # SDF values are divided by this at every network boundary


class ShapeError(ValueError):
    pass


# --------------------------------------------------------------------------
# layer arithmetic
# --------------------------------------------------------------------------

def conv_out(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def tconv_out(n: int, k: int, s: int, p: int, op: int = 0) -> int:
    return (n - 1) * s - 2 * p + k + op


def tconv_padding_for(target: int, k: int, s: int, p: int) -> tuple[int, int]:
    """(input size, output padding) so a transposed conv lands on ``target``.

    The output padding must stay below the stride, so it is the remainder of
    ``target + 2p - k`` modulo ``s``.
    """
    op = (target + 2 * p - k) % s
    n = (target + 2 * p - k - op) // s + 1
    return n, op


LAYER_TYPES = ("conv", "transpose_conv", "linear", "batch_norm", "relu", "sigmoid", "global_avg_pool")


@dataclass(frozen=True)
class LayerSpec:
    type: str
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    output_padding: tuple[int, int] = (0, 0)
    in_ch: int = 0
    out_ch: int = 0

    def __post_init__(self):
        if self.type not in LAYER_TYPES:
            raise ValueError(f"unknown layer type {self.type!r}")

    def out_dims(self, h: int, w: int) -> tuple[int, int]:
        if self.type == "conv":
            return (conv_out(h, self.kernel[0], self.stride[0], self.padding[0]),
                    conv_out(w, self.kernel[1], self.stride[1], self.padding[1]))
        if self.type == "transpose_conv":
            return (tconv_out(h, self.kernel[0], self.stride[0], self.padding[0], self.output_padding[0]),
                    tconv_out(w, self.kernel[1], self.stride[1], self.padding[1], self.output_padding[1]))
        if self.type == "global_avg_pool":
            return 1, 1
        return h, w

    def build(self) -> nn.Module:
        if self.type == "conv":
            return nn.Conv2d(self.in_ch, self.out_ch, self.kernel, self.stride, self.padding)
        if self.type == "transpose_conv":
            return nn.ConvTranspose2d(self.in_ch, self.out_ch, self.kernel, self.stride,
                                      self.padding, self.output_padding)
        raise ValueError(f"build() covers conv layers only, not {self.type}")

    def pack(self) -> bytes:
        return struct.pack("<B10I", LAYER_TYPES.index(self.type), *self.kernel, *self.stride,
                           *self.padding, *self.output_padding, self.in_ch, self.out_ch)

    @classmethod
    def unpack(cls, raw: bytes) -> "LayerSpec":
        t, kh, kw, sh, sw, ph, pw, oh, ow, ci, co = struct.unpack("<B10I", raw)
        return cls(LAYER_TYPES[t], (kh, kw), (sh, sw), (ph, pw), (oh, ow), ci, co)


LAYER_RECORD = struct.calcsize("<B10I")


def conv_bn_relu(spec: LayerSpec) -> nn.Sequential:
    return nn.Sequential(spec.build(), nn.BatchNorm2d(spec.out_ch), nn.ReLU())


# --------------------------------------------------------------------------
# residual squeeze-excitation block
# --------------------------------------------------------------------------

class ResSEBlock(nn.Module):
    """Two conv/BN/ReLU layers, channel attention, residual add, ReLU."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.channels = channels
        self.squeeze = max(1, channels // reduction)
        spec = LayerSpec("conv", (3, 3), (1, 1), (1, 1), in_ch=channels, out_ch=channels)
        self.body = nn.Sequential(conv_bn_relu(spec), conv_bn_relu(spec))
        self.fc1 = nn.Linear(channels, self.squeeze)
        self.fc2 = nn.Linear(self.squeeze, channels)

    def attention(self, u: torch.Tensor) -> torch.Tensor:
        w = u.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(w))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"Res-SE block expects (B, {self.channels}, H, W), got {tuple(x.shape)}")
        u = self.body(x)
        v = u * self.attention(u)[:, :, None, None]
        return F.relu(x + v)


# --------------------------------------------------------------------------
# loss
# --------------------------------------------------------------------------

def loss_eq8(pred: torch.Tensor, gt: torch.Tensor, lam1: float, lam2: float,
             reduction: str = "mean") -> torch.Tensor:
    """Per-sample ``lam1 * MSE - lam2 * cosine``, reduced over the batch.

    Inputs are ``(B, ...)`` or a single unbatched field.  A zero prediction
    has cosine similarity 0 rather than NaN.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"loss shapes differ: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if pred.dim() <= 2:
        pred, gt = pred[None], gt[None]
    p = pred.reshape(pred.shape[0], -1)
    g = gt.reshape(gt.shape[0], -1)
    mse = ((p - g) ** 2).mean(dim=1)
    pn, gn = p.norm(dim=1), g.norm(dim=1)
    ok = (pn > 0) & (gn > 0)
    denom = torch.where(ok, pn * gn, torch.ones_like(pn))
    cos = torch.where(ok, (p * g).sum(dim=1) / denom, torch.zeros_like(pn))
    per = lam1 * mse - lam2 * cos
    if reduction == "none":
        return per
    if reduction == "sum":
        return per.sum()
    return per.mean()


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

class NonFiniteGradient(FloatingPointError):
    pass


class Adam:
    """Bias-corrected Adam over named tensors.

    Parameters
    ----------
    params : iterable of (name, tensor)
        Tensors updated in place; their ``.grad`` is read by :meth:`step`.
    lr, betas, eps : float
        Usual Adam settings.
    """

    def __init__(self, params: Iterable[tuple[str, torch.Tensor]], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m: list[torch.Tensor] = []
        self.v: list[torch.Tensor] = []

    @classmethod
    def named(cls, names: Iterable[str], lr: float, **kw) -> "Adam":
        """State for :func:`adam_step`, where tensors are passed per call."""
        return cls(((n, None) for n in names), lr, **kw)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        grads = [p.grad if p.grad is not None else torch.zeros_like(p) for _, p in self.params]
        self.apply([p for _, p in self.params], grads)

    @torch.no_grad()
    def apply(self, tensors, grads) -> None:
        for (name, _), g in zip(self.params, grads):
            if not torch.isfinite(g).all():
                raise NonFiniteGradient(f"non-finite gradient in parameter {name}")
        if not self.m:
            self.m = [torch.zeros_like(p) for p in tensors]
            self.v = [torch.zeros_like(p) for p in tensors]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(tensors, grads, self.m, self.v):
            m.mul_(self.b1).add_(g, alpha=1.0 - self.b1)
            v.mul_(self.b2).addcmul_(g, g, value=1.0 - self.b2)
            p.sub_(self.lr * (m / c1) / ((v / c2).sqrt() + self.eps))


def adam_step(state: Adam, params, grads) -> list:
    """Functional form: apply one Adam update of ``grads`` to ``params``.

    Accepts numpy arrays or tensors; returns updated copies of the same kind.
    """
    as_np = isinstance(params[0], np.ndarray)
    tensors = [torch.as_tensor(np.array(p, dtype=np.float64)) if as_np else p.detach().clone()
               for p in params]
    gts = [torch.as_tensor(np.asarray(g, dtype=np.float64)) if as_np else g.detach() for g in grads]
    state.apply(tensors, gts)
    return [t.numpy() for t in tensors] if as_np else tensors


# --------------------------------------------------------------------------
# init, checksums, checkpoints
# --------------------------------------------------------------------------

def init_weights(module: nn.Module, seed: int) -> None:
    """Kaiming-uniform weights and zero biases for conv/linear layers,
    unit scale and zero shift for batch norm, all from one seeded stream."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5), generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.reset_running_stats()


def checksum(module: nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


CKPT_MAGIC = b"NNCK"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, module: nn.Module, layers: list[LayerSpec], meta: dict) -> None:
    """Write ``NNCK``: header, JSON metadata, layer table, named f32 tensors."""
    buf = io.BytesIO()
    meta_raw = json.dumps(meta, sort_keys=True).encode()
    state = module.state_dict()
    buf.write(struct.pack("<4sHII", CKPT_MAGIC, CKPT_VERSION, len(meta_raw), len(layers)))
    buf.write(meta_raw)
    for spec in layers:
        buf.write(spec.pack())
    buf.write(struct.pack("<I", len(state)))
    for name, t in state.items():
        arr = t.detach().cpu().numpy().astype("<f4")
        raw_name = name.encode()
        buf.write(struct.pack("<HB", len(raw_name), arr.ndim))
        buf.write(raw_name)
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path) -> tuple[dict, list[LayerSpec], dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("short read")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    magic, version, n_meta, n_layers = struct.unpack("<4sHII", take(14))
    if magic != CKPT_MAGIC:
        raise CheckpointError("bad magic")
    if version != CKPT_VERSION:
        raise CheckpointError("bad version")
    meta = json.loads(take(n_meta))
    layers = [LayerSpec.unpack(take(LAYER_RECORD)) for _ in range(n_layers)]
    (n_tensors,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(n_tensors):
        n_name, ndim = struct.unpack("<HB", take(3))
        name = take(n_name).decode()
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(take(4 * count), "<f4").reshape(shape)
    return meta, layers, tensors


def load_state(module: nn.Module, tensors: dict[str, np.ndarray]) -> None:
    state = module.state_dict()
    if set(state) != set(tensors):
        raise CheckpointError("checkpoint tensors do not match the network")
    module.load_state_dict({k: torch.from_numpy(np.array(v)).to(state[k].dtype) for k, v in tensors.items()})


# --------------------------------------------------------------------------
# finite-difference check
# --------------------------------------------------------------------------

def gradient_check(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, h: float = 1e-3,
                   max_entries: int | None = None, seed: int = 0) -> float:
    """Relative error between autograd and central differences of scalar ``fn``.

    Runs in double precision.  ``max_entries`` checks a random subset of
    coordinates, which keeps large inputs affordable.  The error is
    ``|g_ad - g_fd| / max(|g_ad|, |g_fd|)`` over the checked coordinates.
    """
    x = x.detach().double().clone().requires_grad_(True)
    y = fn(x)
    (g_ad,) = torch.autograd.grad(y, x)
    flat = x.detach().reshape(-1)
    idx = np.arange(flat.numel())
    if max_entries is not None and max_entries < flat.numel():
        idx = np.random.default_rng(seed).choice(flat.numel(), max_entries, replace=False)
    g_fd = torch.zeros(len(idx), dtype=torch.float64)
    with torch.no_grad():
        for j, i in enumerate(idx):
            xp = flat.clone()
            xp[i] += h
            xm = flat.clone()
            xm[i] -= h
            g_fd[j] = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2 * h)
    g_sel = g_ad.reshape(-1)[idx]
    scale = max(float(g_sel.norm()), float(g_fd.norm()), 1e-12)
    return float((g_sel - g_fd).norm()) / scale
