"""Image-based surrogate: masked residual-SE U-Net from blank SDF to thinning field.

The encoder is six strided convolutions, with residual SE blocks at the
bottleneck.  Five transposed convolutions mirror encoder layers 6 to 2, with
output paddings chosen so each stage lands on its encoder twin's size.  A
parameter-free bilinear resize then restores the input size, the raw input SDF
is concatenated, and a 5x5 convolution produces the field.  The output is
zeroed wherever the input SDF is non-negative.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .config import Config
from .fields import FLIP_AXES, GridError, GridKind, GridSpec, ScalarGrid, flip
from .nn import (
    SDF_SCALE,
    Adam,
    LayerSpec,
    ResSEBlock,
    conv_bn_relu,
    conv_out,
    init_weights,
    load_state,
    loss_eq8,
    read_checkpoint,
    save_checkpoint,
    tconv_out,
)
from .oracle import maxima

# (kernel, stride, padding) of encoder layers 1-6
ENCODER_KSP = (
    ((8, 8), (2, 2), (3, 3)),
    ((8, 9), (2, 1), (3, 4)),
    ((6, 5), (2, 2), (2, 2)),
    ((4, 3), (2, 2), (1, 1)),
    ((3, 3), (2, 2), (1, 1)),
    ((3, 3), (2, 2), (1, 1)),
)
FINAL_KSP = ((5, 5), (1, 1), (2, 2))
# fields enter the loss divided by this, so their amplitude is O(1) like the
# scaled SDF input; without it the MSE term barely constrains the amplitude
FIELD_SCALE = 0.1


@dataclass
class IaismConfig:
    channels: tuple[int, ...] = (16, 32, 64, 128, 128, 128)
    n_blocks: int = 6
    epochs: int = 2000
    batch_size: int = 4
    lr: float = 4e-4
    lam: tuple[float, float] = (1.0, 0.2)
    seed: int = 37

    @classmethod
    def from_config(cls, config: Config, section: str = "iaism") -> "IaismConfig":
        d = cls()
        has = lambda k: config.has(section, k)
        return cls(
            channels=tuple(config.get_ints(section, "channels")) if has("channels") else d.channels,
            n_blocks=config.get_int(section, "n_blocks") if has("n_blocks") else d.n_blocks,
            epochs=config.get_int(section, "epochs") if has("epochs") else d.epochs,
            batch_size=config.get_int(section, "batch_size") if has("batch_size") else d.batch_size,
            lr=config.get_float(section, "lr") if has("lr") else d.lr,
            lam=tuple(config.get_floats(section, "lambda")) if has("lambda") else d.lam,
            seed=config.get_int(section, "seed") if has("seed") else d.seed,
        )


def encoder_dims(height: int, width: int) -> list[tuple[int, int]]:
    """Spatial dims after each encoder layer; raises naming a collapsing layer."""
    dims = []
    h, w = height, width
    for i, (k, s, p) in enumerate(ENCODER_KSP, start=1):
        h, w = conv_out(h, k[0], s[0], p[0]), conv_out(w, k[1], s[1], p[1])
        if h < 1 or w < 1:
            axis = "height" if h < 1 else "width"
            raise GridError(f"encoder layer {i} collapses the {axis} of a {height}x{width} input")
        dims.append((h, w))
    return dims


def network_layout(height: int, width: int, channels: Sequence[int]) -> list[LayerSpec]:
    """Layer table: 6 convs, 5 transposed convs (layers 7-11), final conv."""
    if len(channels) != 6:
        raise ValueError("the encoder needs six channel counts")
    dims = encoder_dims(height, width)
    specs = []
    c_in = 1
    for (k, s, p), c in zip(ENCODER_KSP, channels):
        specs.append(LayerSpec("conv", k, s, p, in_ch=c_in, out_ch=c))
        c_in = c
    # layer 7 undoes encoder layer 6, ..., layer 11 undoes layer 2
    c_in = channels[5]
    for enc in range(5, 0, -1):  # zero-based encoder index of the undone layer
        k, s, p = ENCODER_KSP[enc]
        src, dst = dims[enc], dims[enc - 1]
        ops = []
        for ax in (0, 1):
            base = tconv_out(src[ax], k[ax], s[ax], p[ax])
            op = dst[ax] - base
            if not 0 <= op < s[ax]:
                raise GridError(f"transposed layer {13 - enc - 1} cannot reach {dst} from {src}")
            ops.append(op)
        c_out = channels[enc - 1]
        specs.append(LayerSpec("transpose_conv", k, s, p, tuple(ops), c_in, c_out))
        c_in = 2 * c_out  # concatenated with the encoder twin
    k, s, p = FINAL_KSP
    specs.append(LayerSpec("conv", k, s, p, in_ch=c_in + 1, out_ch=1))
    return specs


class MaskResSEUNet(nn.Module):
    def __init__(self, spec: GridSpec, cfg: IaismConfig):
        super().__init__()
        self.spec = spec
        self.layers = network_layout(spec.height, spec.width, cfg.channels)
        self.dims = encoder_dims(spec.height, spec.width)
        self.encoder = nn.ModuleList([conv_bn_relu(s) for s in self.layers[:6]])
        self.blocks = nn.Sequential(*[ResSEBlock(cfg.channels[5]) for _ in range(cfg.n_blocks)])
        self.decoder = nn.ModuleList([
            nn.Sequential(s.build(), nn.BatchNorm2d(s.out_ch), nn.ReLU()) for s in self.layers[6:11]
        ])
        self.head = self.layers[11].build()

    def raw(self, sdf: torch.Tensor) -> torch.Tensor:
        """Unmasked output for SDFs (B, H, W) in mm."""
        x0 = (sdf / SDF_SCALE)[:, None]
        skips = []
        x = x0
        for layer in self.encoder:
            x = layer(x)
            skips.append(x)
        x = self.blocks(x)
        for i, layer in enumerate(self.decoder):
            x = torch.cat([layer(x), skips[4 - i]], dim=1)
        x = F.interpolate(x, size=tuple(sdf.shape[-2:]), mode="bilinear", align_corners=False)
        return self.head(torch.cat([x, x0], dim=1))[:, 0]

    def scaled(self, sdf: torch.Tensor) -> torch.Tensor:
        """Masked output in loss units (field / FIELD_SCALE)."""
        if tuple(sdf.shape[-2:]) != self.spec.shape:
            raise GridError(f"input {tuple(sdf.shape[-2:])} does not match the network grid {self.spec.shape}")
        out = self.raw(sdf)
        return torch.where(sdf < 0, out, torch.zeros((), dtype=out.dtype))

    def forward(self, sdf: torch.Tensor) -> torch.Tensor:
        return self.scaled(sdf) * FIELD_SCALE


def build_network(spec: GridSpec, cfg: IaismConfig | None = None, seed: int | None = None) -> MaskResSEUNet:
    cfg = cfg or IaismConfig()
    net = MaskResSEUNet(spec, cfg)
    init_weights(net, cfg.seed if seed is None else seed)
    net.eval()
    return net


def _tensor(grids: Sequence[ScalarGrid]) -> torch.Tensor:
    return torch.from_numpy(np.stack([g.values for g in grids]).astype(np.float32))


@torch.no_grad()
def forward(net: MaskResSEUNet, sdf: ScalarGrid) -> ScalarGrid:
    if sdf.spec != net.spec:
        raise GridError("SDF grid does not match the network grid")
    net.eval()
    out = net(_tensor([sdf]))[0].numpy()
    return ScalarGrid(sdf.spec, out, GridKind.THINNING)


def predict_maxima(net: MaskResSEUNet, sdf: ScalarGrid) -> tuple[float, float]:
    return maxima(forward(net, sdf))


@torch.no_grad()
def predict_many(net: MaskResSEUNet, sdfs: Sequence[ScalarGrid], batch: int = 8) -> list[ScalarGrid]:
    net.eval()
    out = []
    for start in range(0, len(sdfs), batch):
        chunk = sdfs[start:start + batch]
        for g, v in zip(chunk, net(_tensor(chunk)).numpy()):
            out.append(ScalarGrid(g.spec, v, GridKind.THINNING))
    return out


@dataclass
class IaismRun:
    net: MaskResSEUNet
    history: list[float] = field(default_factory=list)
    n_pairs: int = 0
    config: IaismConfig | None = None


def expand_pairs(pairs: Sequence[tuple[ScalarGrid, ScalarGrid]], augment: bool):
    """Training pairs, fourfold with the three flips when ``augment`` is set."""
    pairs = list(pairs)
    if not augment:
        return pairs
    out = list(pairs)
    for axis in FLIP_AXES:
        out.extend((flip(s, axis), flip(t, axis)) for s, t in pairs)
    return out


def train_iaism(pairs: Sequence[tuple[ScalarGrid, ScalarGrid]], cfg: IaismConfig, augment: bool = False,
                epochs: int | None = None, log=None) -> IaismRun:
    """Adam on the masked loss over (SDF, thinning field) pairs."""
    if len(pairs) < 2:
        raise ValueError("need at least two training pairs")
    spec = pairs[0][0].spec
    if any(s.spec != spec or t.spec != spec for s, t in pairs):
        raise GridError("all pairs must share one grid spec")
    data = expand_pairs(pairs, augment)
    x = _tensor([s for s, _ in data])
    y = _tensor([t for _, t in data]) / FIELD_SCALE
    torch.manual_seed(cfg.seed)
    net = build_network(spec, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = Adam(net.named_parameters(), lr=cfg.lr)
    history = []
    net.train()
    for epoch in range(cfg.epochs if epochs is None else epochs):
        order = torch.randperm(len(data), generator=gen)
        total = 0.0
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = loss_eq8(net.scaled(x[idx]), y[idx], *cfg.lam)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / len(data))
        if log is not None:
            log(epoch, history[-1])
    net.eval()
    return IaismRun(net, history, len(data), cfg)


def write_history(path, history: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(history, start=1):
            w.writerow([i, repr(float(v))])


def save_network(path, net: MaskResSEUNet, cfg: IaismConfig, extra: dict | None = None) -> None:
    spec = net.spec
    meta = {
        "model": "iaism",
        "grid": {"height": spec.height, "width": spec.width, "origin": list(spec.origin), "spacing": spec.spacing},
        "config": asdict(cfg),
        **(extra or {}),
    }
    save_checkpoint(path, net, net.layers, meta)


def load_network(path) -> tuple[MaskResSEUNet, IaismConfig, dict]:
    meta, _, tensors = read_checkpoint(Path(path))
    c = meta["config"]
    cfg = IaismConfig(**{**c, "channels": tuple(c["channels"]), "lam": tuple(c["lam"])})
    g = meta["grid"]
    net = MaskResSEUNet(GridSpec(g["height"], g["width"], tuple(g["origin"]), g["spacing"]), cfg)
    load_state(net, tensors)
    net.eval()
    return net, cfg, meta
