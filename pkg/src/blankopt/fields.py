"""Scalar grids: signed-distance rasterization, marching squares, flips and I/O.

Grid convention: pixel ``(i, j)`` has its centre at
``(origin_x + j * spacing, origin_y + i * spacing)``; rows grow with +y,
columns with +x.  Values are held as ``float64`` in memory so the exact
rasterizer keeps its precision; grid files store ``float32``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .geometry import signed_area


class GridError(ValueError):
    pass


class GridKind(IntEnum):
    SDF = 0
    THINNING = 1


@dataclass(frozen=True)
class GridSpec:
    height: int
    width: int
    origin: tuple[float, float] = (0.0, 0.0)
    spacing: float = 1.0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise GridError(f"grid must be at least 8x8, got {self.height}x{self.width}")
        if not self.spacing > 0:
            raise GridError("spacing must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.height - 1, self.width - 1) * self.spacing)

    def centres(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-centre coordinate arrays ``(X, Y)`` of shape (H, W)."""
        xs = self.origin[0] + np.arange(self.width) * self.spacing
        ys = self.origin[1] + np.arange(self.height) * self.spacing
        return np.meshgrid(xs, ys)

    def to_pixel(self, xy) -> np.ndarray:
        """Continuous (row, col) index of mm coordinates."""
        xy = np.asarray(xy, float)
        col = (xy[..., 0] - self.origin[0]) / self.spacing
        row = (xy[..., 1] - self.origin[1]) / self.spacing
        return np.stack([row, col], axis=-1)

    @classmethod
    def around(cls, bbox, height: int, width: int, margin: float) -> "GridSpec":
        """Square-pixel grid centred on ``bbox`` = (xmin, ymin, xmax, ymax) plus margin."""
        x0, y0, x1, y1 = bbox
        spacing = max((x1 - x0 + 2 * margin) / (width - 1), (y1 - y0 + 2 * margin) / (height - 1))
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        origin = (cx - 0.5 * (width - 1) * spacing, cy - 0.5 * (height - 1) * spacing)
        return cls(height, width, origin, spacing)


@dataclass(frozen=True)
class ScalarGrid:
    spec: GridSpec
    values: np.ndarray
    kind: GridKind = GridKind.SDF

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != self.spec.shape:
            raise GridError(f"values shape {values.shape} does not match spec {self.spec.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", GridKind(self.kind))

    def with_values(self, values, kind: GridKind | None = None) -> "ScalarGrid":
        return ScalarGrid(self.spec, values, self.kind if kind is None else kind)


# --------------------------------------------------------------------------
# rasterization
# --------------------------------------------------------------------------

def _closed_points(contour) -> np.ndarray:
    pts = np.asarray(contour, float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GridError("contour must be an (n, 2) array")
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 3 or abs(signed_area(pts)) == 0.0:
        raise GridError("open contour: need a closed polyline enclosing non-zero area")
    return pts


def segment_distance(px: np.ndarray, py: np.ndarray, contour) -> np.ndarray:
    """Exact Euclidean distance from points to the closed polyline."""
    pts = _closed_points(contour)
    a = pts
    b = np.roll(pts, -1, axis=0)
    best = np.full(px.shape, np.inf)
    flat_x, flat_y = px.ravel(), py.ravel()
    out = best.ravel()
    chunk = max(1, 2_000_000 // max(1, flat_x.size))
    for s in range(0, len(a), chunk):
        ax, ay = a[s:s + chunk, 0][:, None], a[s:s + chunk, 1][:, None]
        dx = (b[s:s + chunk, 0] - a[s:s + chunk, 0])[:, None]
        dy = (b[s:s + chunk, 1] - a[s:s + chunk, 1])[:, None]
        wx, wy = flat_x[None, :] - ax, flat_y[None, :] - ay
        len2 = dx * dx + dy * dy
        t = np.clip((wx * dx + wy * dy) / np.where(len2 > 0, len2, 1.0), 0.0, 1.0)
        ex, ey = wx - t * dx, wy - t * dy
        d = np.sqrt(ex * ex + ey * ey).min(axis=0)
        np.minimum(out, d, out=out)
    return out.reshape(px.shape)


def inside_polygon(px: np.ndarray, py: np.ndarray, contour) -> np.ndarray:
    """Even-odd crossing test."""
    pts = _closed_points(contour)
    inside = np.zeros(px.shape, bool)
    xj, yj = pts[-1]
    for xi, yi in pts:
        cond = (yi > py) != (yj > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= cond & (px < xcross)
        xj, yj = xi, yi
    return inside


def rasterize_sdf(contour, spec: GridSpec) -> ScalarGrid:
    """Exact signed distance (mm): positive outside, negative inside, 0 on the contour."""
    X, Y = spec.centres()
    dist = segment_distance(X, Y, contour)
    inside = inside_polygon(X, Y, contour)
    sdf = np.where(inside, -dist, dist)
    sdf[dist <= 1e-9] = 0.0
    return ScalarGrid(spec, sdf, GridKind.SDF)


# --------------------------------------------------------------------------
# marching squares
# --------------------------------------------------------------------------

# corners: c0=(i,j) c1=(i,j+1) c2=(i+1,j+1) c3=(i+1,j)
# edges:   e0=c0-c1 (bottom)  e1=c1-c2 (right)  e2=c3-c2 (top)  e3=c0-c3 (left)
_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(0, 2)], 11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
}
# saddles keyed by (case, centre_inside)
_SADDLES = {
    (5, True): [(0, 1), (2, 3)],
    (5, False): [(3, 0), (1, 2)],
    (10, True): [(3, 0), (1, 2)],
    (10, False): [(0, 1), (2, 3)],
}


def _edge_key(i: int, j: int, e: int) -> tuple[int, int, int]:
    # horizontal edges keyed (row, col, 0), vertical edges (row, col, 1)
    if e == 0:
        return (i, j, 0)
    if e == 2:
        return (i + 1, j, 0)
    if e == 3:
        return (i, j, 1)
    return (i, j + 1, 1)


def iso_polylines(grid: ScalarGrid, iso: float = 0.0) -> list[tuple[np.ndarray, bool]]:
    """All iso-polylines as ``(points_mm, closed)`` pairs."""
    v = grid.values.astype(np.float64)
    H, W = v.shape
    inside = v < iso
    code = (
        inside[:-1, :-1].astype(np.int8)
        + 2 * inside[:-1, 1:]
        + 4 * inside[1:, 1:]
        + 8 * inside[1:, :-1]
    )
    cells = np.argwhere((code != 0) & (code != 15))
    segments: list[tuple[tuple, tuple]] = []
    for i, j in cells:
        c = int(code[i, j])
        if c in (5, 10):
            centre = 0.25 * (v[i, j] + v[i, j + 1] + v[i + 1, j + 1] + v[i + 1, j])
            pairs = _SADDLES[(c, centre < iso)]
        else:
            pairs = _SEGMENTS[c]
        for ea, eb in pairs:
            segments.append((_edge_key(i, j, ea), _edge_key(i, j, eb)))

    def point(key):
        i, j, vertical = key
        if vertical:
            va, vb = v[i, j], v[i + 1, j]
            t = (iso - va) / (vb - va)
            r, cc = i + t, j
        else:
            va, vb = v[i, j], v[i, j + 1]
            t = (iso - va) / (vb - va)
            r, cc = i, j + t
        return r, cc

    adj: dict[tuple, list[int]] = {}
    for k, (a, b) in enumerate(segments):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = np.zeros(len(segments), bool)
    lines: list[tuple[np.ndarray, bool]] = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        a, b = segments[start]
        chain = [a, b]
        # extend forward from b, then backward from a
        for direction in (1, -1):
            end = chain[-1] if direction == 1 else chain[0]
            while True:
                nxt = [k for k in adj[end] if not used[k]]
                if not nxt:
                    break
                k = nxt[0]
                used[k] = True
                s0, s1 = segments[k]
                end = s1 if s0 == end else s0
                if direction == 1:
                    chain.append(end)
                else:
                    chain.insert(0, end)
        closed = len(chain) > 3 and chain[0] == chain[-1]
        if closed:
            chain = chain[:-1]
        rc = np.array([point(k) for k in chain], float)
        xy = np.stack(
            [grid.spec.origin[0] + rc[:, 1] * grid.spec.spacing,
             grid.spec.origin[1] + rc[:, 0] * grid.spec.spacing],
            axis=1,
        )
        lines.append((xy, closed))
    return lines


def polyline_length(points: np.ndarray, closed: bool = True) -> float:
    d = np.diff(np.vstack([points, points[:1]]) if closed else points, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def extract_contour(grid: ScalarGrid, iso: float = 0.0) -> np.ndarray:
    """Longest closed iso-polyline (CCW, mm) via marching squares."""
    v = grid.values
    if not (np.any(v < iso) and np.any(v > iso)):
        raise GridError("empty level set")
    closed = [pts for pts, is_closed in iso_polylines(grid, iso) if is_closed and len(pts) >= 3]
    if not closed:
        raise GridError("empty level set: no closed iso-line")
    best = max(closed, key=polyline_length)
    if signed_area(best) < 0:
        best = best[::-1].copy()
    return best


def count_closed_contours(grid: ScalarGrid, iso: float = 0.0) -> tuple[int, int]:
    """Number of (closed, open) iso-polylines."""
    if not (np.any(grid.values < iso) and np.any(grid.values > iso)):
        return 0, 0
    lines = iso_polylines(grid, iso)
    n_closed = sum(1 for _, c in lines if c)
    return n_closed, len(lines) - n_closed


# --------------------------------------------------------------------------
# augmentation
# --------------------------------------------------------------------------

FLIP_AXES = ("horizontal", "vertical", "both")


def flip(grid: ScalarGrid, axis: str) -> ScalarGrid:
    """Index reversal: ``horizontal`` mirrors columns, ``vertical`` rows."""
    if axis == "horizontal":
        values = grid.values[:, ::-1]
    elif axis == "vertical":
        values = grid.values[::-1, :]
    elif axis == "both":
        values = grid.values[::-1, ::-1]
    else:
        raise ValueError(f"unknown flip axis {axis!r}")
    return grid.with_values(values.copy())


def augment_pairs(pairs):
    """Original pairs followed by their three flipped variants (4x)."""
    out = list(pairs)
    for axis in FLIP_AXES:
        out.extend((flip(a, axis), flip(b, axis)) for a, b in pairs)
    return out


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

MAGIC = b"FGRD"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIddd")


def grid_to_bytes(grid: ScalarGrid) -> bytes:
    s = grid.spec
    header = _HEADER.pack(MAGIC, VERSION, 0, int(grid.kind), s.height, s.width,
                          s.origin[0], s.origin[1], s.spacing)
    return header + grid.values.astype("<f4").tobytes(order="C")


def grid_from_bytes(data: bytes) -> ScalarGrid:
    if len(data) < _HEADER.size:
        raise GridError("short read: truncated header")
    magic, version, dtype, kind, h, w, ox, oy, sp = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise GridError(f"bad magic {magic!r}")
    if version != VERSION:
        raise GridError(f"bad version {version}")
    if dtype != 0:
        raise GridError(f"bad dtype {dtype}")
    if kind not in (0, 1):
        raise GridError(f"bad kind {kind}")
    need = _HEADER.size + 4 * h * w
    if len(data) < need:
        raise GridError(f"short read: expected {need} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", count=h * w, offset=_HEADER.size).reshape(h, w)
    return ScalarGrid(GridSpec(h, w, (ox, oy), sp), values.astype(np.float32), GridKind(kind))


def write_grid(grid: ScalarGrid, path: str | Path) -> None:
    Path(path).write_bytes(grid_to_bytes(grid))


def read_grid(path: str | Path) -> ScalarGrid:
    return grid_from_bytes(Path(path).read_bytes())


def export_csv(grid: ScalarGrid, path: str | Path) -> None:
    np.savetxt(path, grid.values, delimiter=",", fmt="%.6g")


def export_pgm(grid: ScalarGrid, path: str | Path, vmin: float | None = None,
               vmax: float | None = None) -> None:
    """8-bit binary PGM, top row = highest y so the image is upright."""
    v = grid.values.astype(np.float64)
    lo = float(v.min()) if vmin is None else vmin
    hi = float(v.max()) if vmax is None else vmax
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.clip(np.round((v - lo) * scale), 0, 255).astype(np.uint8)[::-1]
    header = f"P5\n{grid.spec.width} {grid.spec.height}\n255\n".encode()
    Path(path).write_bytes(header + img.tobytes())

