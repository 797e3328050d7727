"""Auto-decoder: a generator trained jointly with one latent code per shape.

There is no encoder.  Unseen shapes get a latent by optimising it against the
frozen decoder.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .config import Config
from .fields import GridError, GridSpec, ScalarGrid
from .nn import (
    SDF_SCALE,
    Adam,
    LayerSpec,
    ResSEBlock,
    ShapeError,
    conv_bn_relu,
    init_weights,
    loss_eq8,
    read_checkpoint,
    load_state,
    save_checkpoint,
    tconv_padding_for,
)

LATENT_DIM = 25

# (kernel, stride, padding) of the four transposed convolutions
TCONV_KSP = (
    ((4, 3), (2, 2), (1, 1)),
    ((6, 5), (2, 2), (2, 2)),
    ((8, 9), (2, 1), (3, 4)),
    ((8, 8), (2, 2), (3, 3)),
)


@dataclass
class DecoderConfig:
    latent_dim: int = LATENT_DIM
    channels: tuple[int, ...] = (128, 64, 32, 16)
    n_blocks: int = 6
    epochs: int = 2000
    batch_size: int = 16
    lr: float = 4e-4
    lam: tuple[float, float] = (0.01, 0.2)
    seed: int = 37
    latent_std: float = 0.01
    infer_steps: int = 1000
    infer_lr: float = 0.4
    infer_batch: int = 16

    @classmethod
    def from_config(cls, config: Config, section: str = "autodecoder") -> "DecoderConfig":
        d = cls()
        get = lambda key, fn, default: fn(section, key, default) if config.has(section, key) else default
        return cls(
            latent_dim=get("latent_dim", config.get_int, d.latent_dim),
            channels=tuple(config.get_ints(section, "channels")) if config.has(section, "channels") else d.channels,
            n_blocks=get("n_blocks", config.get_int, d.n_blocks),
            epochs=get("epochs", config.get_int, d.epochs),
            batch_size=get("batch_size", config.get_int, d.batch_size),
            lr=get("lr", config.get_float, d.lr),
            lam=tuple(config.get_floats(section, "lambda")) if config.has(section, "lambda") else d.lam,
            seed=get("seed", config.get_int, d.seed),
            latent_std=get("latent_std", config.get_float, d.latent_std),
            infer_steps=get("infer_steps", config.get_int, d.infer_steps),
            infer_lr=get("infer_lr", config.get_float, d.infer_lr),
            infer_batch=get("infer_batch", config.get_int, d.infer_batch),
        )


def decoder_layout(height: int, width: int, channels: Sequence[int]):
    """Seed dims and the four transposed-conv specs that land on (height, width).

    Works backwards from the output, choosing each layer's output padding so
    the size formula inverts exactly.
    """
    if len(channels) != 4:
        raise ValueError("decoder needs four channel counts")
    outs = list(channels[1:]) + [1]
    dims = (height, width)
    specs = []
    for (k, s, p), c_in, c_out in reversed(list(zip(TCONV_KSP, channels, outs))):
        h_in, oh = tconv_padding_for(dims[0], k[0], s[0], p[0])
        w_in, ow = tconv_padding_for(dims[1], k[1], s[1], p[1])
        if h_in < 1 or w_in < 1:
            raise GridError(f"grid {height}x{width} too small for the decoder")
        specs.append(LayerSpec("transpose_conv", k, s, p, (oh, ow), c_in, c_out))
        dims = (h_in, w_in)
    return dims, specs[::-1]


class Decoder(nn.Module):
    """Latent (B, d) to scaled SDF (B, H, W)."""

    def __init__(self, spec: GridSpec, cfg: DecoderConfig):
        super().__init__()
        self.spec = spec
        self.latent_dim = cfg.latent_dim
        self.seed_hw, self.tconv_specs = decoder_layout(spec.height, spec.width, cfg.channels)
        c0 = cfg.channels[0]
        h0, w0 = self.seed_hw
        self.linear = nn.Linear(cfg.latent_dim, c0 * h0 * w0)
        self.conv_spec = LayerSpec("conv", (3, 3), (1, 1), (1, 1), in_ch=c0, out_ch=c0)
        self.stem = conv_bn_relu(self.conv_spec)
        self.blocks = nn.Sequential(*[ResSEBlock(c0) for _ in range(cfg.n_blocks)])
        ups = []
        for i, s in enumerate(self.tconv_specs):
            last = i == len(self.tconv_specs) - 1
            ups.append(s.build() if last else nn.Sequential(s.build(), nn.BatchNorm2d(s.out_ch), nn.ReLU()))
        self.ups = nn.Sequential(*ups)

    @property
    def layers(self) -> list[LayerSpec]:
        return [self.conv_spec, *self.tconv_specs]

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"latent must have {self.latent_dim} components, got shape {tuple(z.shape)}")
        h0, w0 = self.seed_hw
        x = self.linear(z).reshape(z.shape[0], -1, h0, w0)
        x = self.ups(self.blocks(self.stem(x)))
        return x[:, 0]


@dataclass
class DecoderRun:
    model: Decoder
    latents: np.ndarray
    history: list[float] = field(default_factory=list)
    config: DecoderConfig | None = None


def _stack(grids: Sequence[ScalarGrid]) -> tuple[GridSpec, np.ndarray]:
    if not grids:
        raise ValueError("no grids given")
    spec = grids[0].spec
    for g in grids[1:]:
        if g.spec != spec:
            raise GridError("all shapes must share one grid spec")
    return spec, np.stack([g.values for g in grids]).astype(np.float32)


def build_decoder(spec: GridSpec, cfg: DecoderConfig) -> Decoder:
    model = Decoder(spec, cfg)
    init_weights(model, cfg.seed)
    return model


def train_autodecoder(shapes: Sequence[ScalarGrid], cfg: DecoderConfig, log=None) -> DecoderRun:
    """Fit decoder weights and one latent per shape to the given SDFs."""
    spec, data = _stack(shapes)
    torch.manual_seed(cfg.seed)
    model = build_decoder(spec, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)
    latents = (torch.randn(len(data), cfg.latent_dim, generator=gen) * cfg.latent_std).requires_grad_(True)
    target = torch.from_numpy(data) / SDF_SCALE
    opt = Adam([*model.named_parameters(), ("latents", latents)], lr=cfg.lr)
    history = []
    model.train()
    for epoch in range(cfg.epochs):
        order = torch.randperm(len(data), generator=gen)
        total = 0.0
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = loss_eq8(model(latents[idx]), target[idx], *cfg.lam)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / len(data))
        if log is not None:
            log(epoch, history[-1])
    model.eval()
    return DecoderRun(model, latents.detach().numpy().copy(), history, cfg)


def decode(model: Decoder, z) -> ScalarGrid:
    """SDF grid (mm) for one latent vector."""
    z = torch.as_tensor(np.asarray(z, dtype=np.float32))
    if z.dim() != 1 or z.shape[0] != model.latent_dim:
        raise ShapeError(f"latent must have {model.latent_dim} components, got shape {tuple(z.shape)}")
    return decode_many(model, z[None])[0]


@torch.no_grad()
def decode_many(model: Decoder, zs) -> list[ScalarGrid]:
    model.eval()
    out = model(torch.as_tensor(np.asarray(zs, dtype=np.float32))) * SDF_SCALE
    return [ScalarGrid(model.spec, v.numpy()) for v in out]


def infer_latents(model: Decoder, sdfs: Sequence[ScalarGrid], cfg: DecoderConfig,
                  steps: int | None = None, lr: float | None = None, seed: int = 0):
    """Latents for unseen shapes by Adam on the codes with the decoder frozen.

    Shapes are processed in batches.  The loss is summed over a batch, and
    Adam updates each component independently, so a batch gives the same
    codes as running each shape alone.  Returns ``(latents, history)`` where
    ``history[b][t]`` is batch ``b``'s mean loss before step ``t``.
    """
    steps = cfg.infer_steps if steps is None else steps
    lr = cfg.infer_lr if lr is None else lr
    spec, data = _stack(sdfs)
    if spec != model.spec:
        raise GridError("shapes are not on the decoder's grid")
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    gen = torch.Generator().manual_seed(int(seed))
    init = torch.randn(len(data), model.latent_dim, generator=gen) * cfg.latent_std
    out = init.clone()
    histories = []
    try:
        for start in range(0, len(data), cfg.infer_batch):
            z = init[start:start + cfg.infer_batch].clone().requires_grad_(True)
            target = torch.from_numpy(data[start:start + cfg.infer_batch]) / SDF_SCALE
            opt = Adam([("latent", z)], lr=lr)
            hist = []
            for _ in range(steps):
                opt.zero_grad()
                loss = loss_eq8(model(z), target, *cfg.lam, reduction="sum")
                loss.backward()
                opt.step()
                hist.append(loss.item() / len(z))
            out[start:start + len(z)] = z.detach()
            histories.append(hist)
    finally:
        for p in model.parameters():
            p.requires_grad_(True)
    return out.numpy(), histories


def infer_latent(model: Decoder, sdf: ScalarGrid, cfg: DecoderConfig, steps: int | None = None,
                 lr: float | None = None, seed: int = 0) -> np.ndarray:
    z, _ = infer_latents(model, [sdf], cfg, steps, lr, seed)
    return z[0]


def interpolate_latents(z1, z2, k: int = 8) -> list[np.ndarray]:
    """``k`` evenly spaced interior points on the segment from z1 to z2."""
    z1, z2 = np.asarray(z1, float), np.asarray(z2, float)
    if z1.shape != z2.shape:
        raise ValueError("latents differ in length")
    return [z1 + (i / (k + 1)) * (z2 - z1) for i in range(1, k + 1)]


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def _spec_meta(spec: GridSpec) -> dict:
    return {"height": spec.height, "width": spec.width, "origin": list(spec.origin), "spacing": spec.spacing}


def _spec_from_meta(meta: dict) -> GridSpec:
    return GridSpec(meta["height"], meta["width"], tuple(meta["origin"]), meta["spacing"])


def save_decoder(path, model: Decoder, cfg: DecoderConfig, extra: dict | None = None) -> None:
    meta = {"model": "autodecoder", "grid": _spec_meta(model.spec), "config": asdict(cfg), **(extra or {})}
    save_checkpoint(path, model, model.layers, meta)


def load_decoder(path) -> tuple[Decoder, DecoderConfig, dict]:
    meta, _, tensors = read_checkpoint(path)
    c = meta["config"]
    cfg = DecoderConfig(**{**c, "channels": tuple(c["channels"]), "lam": tuple(c["lam"])})
    model = Decoder(_spec_from_meta(meta["grid"]), cfg)
    load_state(model, tensors)
    model.eval()
    return model, cfg, meta
