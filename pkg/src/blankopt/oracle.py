"""Synthetic forming oracle standing in for the hot-stamping FE run.

The thinning field is a sum of Gaussian bumps, one per feature site.  Each
site's amplitude is an affine function of the blank SDF read at a probe
point, clamped to ``[0, 0.5]``, so local material around the probes drives
the field.  Positive sites thin, negative sites thicken.  The field is zero
outside the blank.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config, ConfigError, parse_floats
from .fields import GridKind, ScalarGrid

MAX_THINNING = 0.15
MAX_THICKENING = 0.10


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Site:
    centre: tuple[float, float]
    sigma: float
    sign: int  # +1 thinning, -1 thickening
    probe: tuple[float, float]
    alpha: float
    beta: float  # per mm of probe SDF


@dataclass(frozen=True)
class OracleConfig:
    sites: tuple[Site, ...]
    clamp: tuple[float, float] = (0.0, 0.5)

    def __post_init__(self):
        if len(self.sites) < 4:
            raise OracleError("oracle needs at least 4 sites")
        signs = {s.sign for s in self.sites}
        if signs != {1, -1}:
            raise OracleError("oracle needs at least one thinning and one thickening site")
        if any(not s.sigma > 0 for s in self.sites):
            raise OracleError("site widths must be positive")
        lo, hi = self.clamp
        if not (0.0 <= lo <= hi <= 0.5):
            raise OracleError("amplitude clamp must lie within [0, 0.5]")

    @classmethod
    def from_config(cls, config: Config, section: str = "oracle") -> "OracleConfig":
        sites = []
        keys = sorted((k for k in config.keys(section) if k.startswith("site")),
                      key=lambda k: int(k.split("_")[1]))
        for key in keys:
            vals = parse_floats(config.raw(section, key), f"[{section}] {key}")
            if len(vals) != 8:
                raise ConfigError(f"[{section}] {key}: expected 8 numbers "
                                  "(x y sigma sign probe_x probe_y alpha beta)")
            x, y, sigma, sign, px, py, alpha, beta = vals
            if sign not in (1.0, -1.0):
                raise ConfigError(f"[{section}] {key}: sign must be +1 or -1")
            sites.append(Site((x, y), sigma, int(sign), (px, py), alpha, beta))
        clamp = tuple(config.get_floats(section, "clamp")) if config.has(section, "clamp") else (0.0, 0.5)
        return cls(tuple(sites), clamp)


@dataclass(frozen=True)
class ThinningResult:
    field: ScalarGrid
    max_thinning: float
    max_thickening: float

    @property
    def passes(self) -> bool:
        return meets_criteria(self.max_thinning, self.max_thickening)


def meets_criteria(max_thinning: float, max_thickening: float,
                   limits: tuple[float, float] = (MAX_THINNING, MAX_THICKENING)) -> bool:
    return max_thinning <= limits[0] and max_thickening <= limits[1]


def bilinear(grid: ScalarGrid, xy) -> float:
    """Bilinear sample of the grid at mm coordinates ``xy``."""
    r, c = grid.spec.to_pixel(np.asarray(xy, float))
    H, W = grid.spec.shape
    if not (0.0 <= r <= H - 1 and 0.0 <= c <= W - 1):
        raise OracleError(f"probe {tuple(xy)} lies outside the grid")
    i0, j0 = min(int(np.floor(r)), H - 2), min(int(np.floor(c)), W - 2)
    fr, fc = r - i0, c - j0
    v = grid.values.astype(np.float64)
    return float(
        (1 - fr) * (1 - fc) * v[i0, j0] + (1 - fr) * fc * v[i0, j0 + 1]
        + fr * (1 - fc) * v[i0 + 1, j0] + fr * fc * v[i0 + 1, j0 + 1]
    )


def site_amplitudes(sdf: ScalarGrid, cfg: OracleConfig) -> np.ndarray:
    lo, hi = cfg.clamp
    return np.array([np.clip(s.alpha + s.beta * bilinear(sdf, s.probe), lo, hi) for s in cfg.sites])


def simulate(sdf: ScalarGrid, cfg: OracleConfig) -> ThinningResult:
    if sdf.kind != GridKind.SDF:
        raise OracleError("simulate expects an SDF grid")
    X, Y = sdf.spec.centres()
    amps = site_amplitudes(sdf, cfg)
    field = np.zeros(sdf.spec.shape)
    for site, amp in zip(cfg.sites, amps):
        r2 = (X - site.centre[0]) ** 2 + (Y - site.centre[1]) ** 2
        field += site.sign * amp * np.exp(-r2 / (2.0 * site.sigma ** 2))
    field = np.where(sdf.values < 0, field, 0.0)
    grid = ScalarGrid(sdf.spec, field, GridKind.THINNING)
    thin, thick = maxima(grid)
    return ThinningResult(grid, thin, thick)


def maxima(field: ScalarGrid) -> tuple[float, float]:
    """(max thinning, max thickening), both clipped at zero."""
    if field.kind != GridKind.THINNING:
        raise OracleError("maxima expects a thinning field")
    v = field.values
    return max(0.0, float(v.max())), max(0.0, float(-v.min()))
