"""Gradient-based blank optimisation in latent space.

A latent code is decoded to an SDF, the field surrogate predicts the thinning
field, and Adam moves the code to reduce a loss.  The loss is the maximum
thickening, a hinge on maximum thinning above a threshold, and a term that
keeps the region-1 edge straight.  Decoder and surrogate stay frozen.  The
result is checked by re-rasterising the extracted contour and running the
forming oracle.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .autodecoder import Decoder
from .config import Config
from .fields import GridError, ScalarGrid, extract_contour, rasterize_sdf
from .iaism import MaskResSEUNet
from .nn import SDF_SCALE, Adam, checksum
from .oracle import OracleConfig, ThinningResult, simulate

REF_GRAD = (0.0603, 0.9982)


class BoxError(ValueError):
    pass


@dataclass
class OptimizerConfig:
    lam1: float = 0.1
    lam2: float = 0.35
    lam3: float = 1.5
    threshold: float = 0.13
    lr: float = 0.002
    epochs: int = 2000
    box: tuple[int, int, int, int] | None = (0, 0, 0, 0)  # row0, row1, col0, col1 (inclusive); None = derive
    ref_grad: tuple[float, float] = REF_GRAD
    mode: str = "hard"  # or "smooth"
    tau: float = 0.01
    start_jitter: float = 0.0

    def __post_init__(self):
        if min(self.lam1, self.lam2, self.lam3) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 < self.threshold < 0.15:
            raise ValueError("thinning threshold must lie in (0, 0.15)")
        if self.mode not in ("hard", "smooth"):
            raise ValueError("max mode must be 'hard' or 'smooth'")

    @classmethod
    def from_config(cls, config: Config, section: str = "optimizer") -> "OptimizerConfig":
        d = cls()
        has = lambda k: config.has(section, k)
        f = lambda k, v: config.get_float(section, k) if has(k) else v
        return cls(
            lam1=f("lambda1", d.lam1), lam2=f("lambda2", d.lam2), lam3=f("lambda3", d.lam3),
            threshold=f("threshold", d.threshold), lr=f("lr", d.lr),
            epochs=config.get_int(section, "epochs") if has("epochs") else d.epochs,
            box=_box_option(config, section, d.box),
            ref_grad=tuple(config.get_floats(section, "ref_grad")) if has("ref_grad") else d.ref_grad,
            mode=config.get_str(section, "mode") if has("mode") else d.mode,
            tau=f("tau", d.tau), start_jitter=f("start_jitter", d.start_jitter),
        )


def _box_option(config: Config, section: str, default):
    if not config.has(section, "box"):
        return default
    if config.get_str(section, "box").strip().lower() == "auto":
        return None
    return tuple(config.get_ints(section, "box"))


def _check_box(box, shape) -> None:
    if box is None:
        raise BoxError("line box is 'auto' but was never derived from the geometry")
    r0, r1, c0, c1 = box
    if r0 > r1 or c0 > c1:
        raise BoxError(f"box {tuple(box)} is empty")
    if r0 < 1 or c0 < 1 or r1 > shape[0] - 2 or c1 > shape[1] - 2:
        raise BoxError(f"box {tuple(box)} lies outside the grid interior {shape}")


def line_regulariser(sdf, box, ref_grad=REF_GRAD, spacing: float = 1.0):
    """Mean squared deviation of the SDF gradient from ``ref_grad`` over ``box``.

    Gradients are central differences divided by ``spacing``.  With the
    grid's spacing they are in SDF units per unit length, which is unit norm
    for an exact SDF.  Rows run along +y and columns along +x.  Accepts a
    tensor (differentiable) or a :class:`ScalarGrid`.
    """
    if isinstance(sdf, ScalarGrid):
        return float(line_regulariser(torch.from_numpy(sdf.values.astype(np.float64)), box, ref_grad, spacing))
    _check_box(box, tuple(sdf.shape[-2:]))
    r0, r1, c0, c1 = box
    gx = (sdf[..., r0:r1 + 1, c0 + 1:c1 + 2] - sdf[..., r0:r1 + 1, c0 - 1:c1]) / (2.0 * spacing)
    gy = (sdf[..., r0 + 1:r1 + 2, c0:c1 + 1] - sdf[..., r0 - 1:r1, c0:c1 + 1]) / (2.0 * spacing)
    dev = (gx - ref_grad[0]) ** 2 + (gy - ref_grad[1]) ** 2
    return dev.mean(dim=(-2, -1))


def field_maxima(field: torch.Tensor, mode: str = "hard", tau: float = 0.01):
    """(max thinning, max thickening) of a field tensor, both >= 0."""
    flat = field.reshape(-1)
    if mode == "hard":
        top, bottom = flat.max(), -flat.min()
    else:
        top = tau * torch.logsumexp(flat / tau, dim=0)
        bottom = tau * torch.logsumexp(-flat / tau, dim=0)
    return torch.clamp(top, min=0.0), torch.clamp(bottom, min=0.0)


def loss_eq11(field: torch.Tensor, sdf: torch.Tensor, cfg: OptimizerConfig, spacing: float = 1.0,
              parts: bool = False):
    """``lam1*|thick| + lam2*max(0, |thin| - threshold) + lam3*line``."""
    thin, thick = field_maxima(field, cfg.mode, cfg.tau)
    line = line_regulariser(sdf, cfg.box, cfg.ref_grad, spacing)
    loss = cfg.lam1 * thick.abs() + cfg.lam2 * torch.clamp(thin.abs() - cfg.threshold, min=0.0) + cfg.lam3 * line
    if parts:
        return loss, {"thin": thin, "thick": thick, "line": line}
    return loss


def select_start_latent(latents: np.ndarray, thickening: Sequence[float]) -> tuple[int, np.ndarray]:
    """Index and latent of the sample with the lowest max thickening (first on ties)."""
    if len(latents) == 0 or len(latents) != len(thickening):
        raise ValueError("need one thickening value per latent")
    i = int(np.argmin(np.asarray(thickening, float)))
    return i, np.asarray(latents[i]).copy()


@dataclass
class Validation:
    result: ThinningResult | None
    passed: bool
    reason: str = ""
    contour: np.ndarray | None = None


@dataclass
class OptimizationTrace:
    loss: list[float] = field(default_factory=list)
    max_thinning: list[float] = field(default_factory=list)
    max_thickening: list[float] = field(default_factory=list)
    line: list[float] = field(default_factory=list)
    latent: np.ndarray | None = None
    contour: np.ndarray | None = None
    validation: Validation | None = None
    aborted: str = ""
    checksums: tuple[str, str] = ("", "")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "max_thinning", "max_thickening", "line"])
            for i, row in enumerate(zip(self.loss, self.max_thinning, self.max_thickening, self.line)):
                w.writerow([i, *(repr(float(v)) for v in row)])


def optimise(start, decoder: Decoder, net: MaskResSEUNet, cfg: OptimizerConfig, seed: int = 0,
             oracle: OracleConfig | None = None) -> OptimizationTrace:
    """Adam on the latent only; returns the per-epoch trace (length epochs + 1)."""
    if decoder.spec != net.spec:
        raise GridError("decoder and surrogate are on different grids")
    spacing = decoder.spec.spacing
    sums = (checksum(decoder), checksum(net))
    gen = torch.Generator().manual_seed(int(seed))
    z0 = torch.as_tensor(np.asarray(start, dtype=np.float32)).clone()
    if cfg.start_jitter > 0:
        z0 = z0 + cfg.start_jitter * torch.randn(z0.shape, generator=gen)
    z = z0[None].clone().requires_grad_(True)
    decoder.eval()
    net.eval()
    frozen = [p for m in (decoder, net) for p in m.parameters()]
    flags = [p.requires_grad for p in frozen]
    for p in frozen:
        p.requires_grad_(False)
    opt = Adam([("latent", z)], lr=cfg.lr)
    trace = OptimizationTrace()
    try:
        for epoch in range(cfg.epochs + 1):
            opt.zero_grad()
            sdf = decoder(z)[0] * SDF_SCALE
            fld = net(sdf[None])[0]
            loss, parts = loss_eq11(fld, sdf, cfg, spacing, parts=True)
            value = loss.item()
            if not math.isfinite(value):
                trace.aborted = f"non-finite loss at epoch {epoch}"
                break
            with torch.no_grad():
                hard_thin, hard_thick = field_maxima(fld, "hard")
            trace.loss.append(value)
            trace.max_thinning.append(float(hard_thin))
            trace.max_thickening.append(float(hard_thick))
            trace.line.append(parts["line"].item())
            if epoch == cfg.epochs:
                break
            loss.backward()
            opt.step()
    finally:
        for p, f in zip(frozen, flags):
            p.requires_grad_(f)
    trace.latent = z.detach()[0].numpy().copy()
    trace.checksums = (sums[0] + sums[1], checksum(decoder) + checksum(net))
    if oracle is not None:
        trace.validation = validate(trace.latent, decoder, oracle)
        trace.contour = trace.validation.contour
    return trace


def validate(latent, decoder: Decoder, oracle: OracleConfig) -> Validation:
    """Decode, extract the contour, re-rasterise and run the forming oracle."""
    from .autodecoder import decode

    sdf = decode(decoder, latent)
    try:
        contour = extract_contour(sdf)
        exact = rasterize_sdf(contour, sdf.spec)
    except GridError as exc:
        return Validation(None, False, str(exc))
    result = simulate(exact, oracle)
    reason = "" if result.passes else (
        f"max thinning {result.max_thinning:.4f} / max thickening {result.max_thickening:.4f} exceed limits"
    )
    return Validation(result, result.passes, reason, contour)
