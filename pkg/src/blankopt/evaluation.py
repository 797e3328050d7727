"""Reconstruction and surrogate-accuracy metrics and the comparison table."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import GridError, ScalarGrid

REL_EPS = 1e-9


class MetricError(ValueError):
    pass


def _diff(gt: ScalarGrid, pd: ScalarGrid) -> np.ndarray:
    if gt.spec != pd.spec:
        raise GridError("grids are on different specs")
    return np.abs(gt.values.astype(np.float64) - pd.values.astype(np.float64))


def mpae(gt: ScalarGrid, pd: ScalarGrid) -> float:
    """Maximum absolute pixel-wise error."""
    return float(_diff(gt, pd).max())


def aape(gt: ScalarGrid, pd: ScalarGrid) -> float:
    """Average absolute pixel-wise error."""
    return float(_diff(gt, pd).mean())


def rmt(gt_max: float, pd_max: float) -> float:
    """Relative error of a maximum, ``|gt - pd| / |gt|``."""
    if abs(gt_max) < REL_EPS:
        raise MetricError(f"undefined relative error: ground truth {gt_max!r} is zero")
    return abs(gt_max - pd_max) / abs(gt_max)


rmtk = rmt


@dataclass
class ModelScore:
    name: str
    armt: float | None = None
    armtk: float | None = None
    rmt: list[float] = field(default_factory=list)
    rmtk: list[float] = field(default_factory=list)


@dataclass
class EvalReport:
    split: str
    rows: list[ModelScore]

    def row(self, name: str) -> ModelScore:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def table(self) -> list[list[str]]:
        fmt = lambda v: "-" if v is None else f"{100.0 * v:.2f}%"
        lines = [["model", "ARMT", "ARMTK"]]
        for r in self.rows:
            lines.append([r.name, fmt(r.armt), fmt(r.armtk)])
        return lines

    def text(self) -> str:
        rows = self.table()
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        out = [f"split: {self.split}"]
        for r in rows:
            out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        return "\n".join(out)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "split", "armt", "armtk"])
            for r in self.rows:
                w.writerow([r.name, self.split,
                            "" if r.armt is None else repr(r.armt),
                            "" if r.armtk is None else repr(r.armtk)])


def score(name: str, gt: Sequence[tuple[float, float]], pred_thin=None, pred_thick=None) -> ModelScore:
    """ARMT/ARMTK of one model.  ``gt`` holds (thinning, thickening) pairs;
    either prediction list may be None for single-indicator models."""
    s = ModelScore(name)
    if pred_thin is not None:
        s.rmt = [rmt(g[0], p) for g, p in zip(gt, pred_thin, strict=True)]
        s.armt = float(np.mean(s.rmt))
    if pred_thick is not None:
        s.rmtk = [rmtk(g[1], p) for g, p in zip(gt, pred_thick, strict=True)]
        s.armtk = float(np.mean(s.rmtk))
    return s


def evaluate_surrogates(gt: Sequence[tuple[float, float]], predictions: dict, split: str = "test") -> EvalReport:
    """Table of ARMT/ARMTK per model.

    ``predictions`` maps a model name to ``(thin list or None, thick list or
    None)``, in display order.
    """
    rows = [score(name, gt, thin, thick) for name, (thin, thick) in predictions.items()]
    return EvalReport(split, rows)


@dataclass
class ReconstructionStats:
    mpae: list[float]
    aape: list[float]

    @property
    def summary(self) -> dict[str, float]:
        return {
            "mean_mpae": float(np.mean(self.mpae)), "max_mpae": float(np.max(self.mpae)),
            "mean_aape": float(np.mean(self.aape)), "max_aape": float(np.max(self.aape)),
        }


def reconstruction_stats(gts: Sequence[ScalarGrid], pds: Sequence[ScalarGrid]) -> ReconstructionStats:
    pairs = list(zip(gts, pds, strict=True))
    return ReconstructionStats([mpae(g, p) for g, p in pairs], [aape(g, p) for g, p in pairs])


def sig(x: float, digits: int = 6) -> str:
    """``x`` rounded to ``digits`` significant figures, for reproducibility checks."""
    if x == 0 or not math.isfinite(x):
        return repr(x)
    return f"{x:.{digits - 1}e}"
