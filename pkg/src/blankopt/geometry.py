"""Parametric blank outline: reference geometry, the 16 parameterisations and
contour construction.

The reference outline is a sharp counter-clockwise polygon.  Region 1 is a
straight edge that translates along its normal; regions 2-5 are convex
corners that get replaced by a transition curve, either an arc chain
(small arc / line / main arc / line) or a Bézier spline.

Each transition corner is built in a local frame where the *arc line* is the
edge carrying the small arc (traversed towards the corner) and the *other
line* is the long straight edge the curve lands on (traversed away from the
corner).  Regions whose small arc sits on the outgoing edge are built
reversed and flipped back into traversal order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .config import Config, ConfigError

CHORD_TOL = 0.5  # mm
MIN_LINE = 15.0  # in-between line / radius lower limit, mm
MIN_SUBLINE = 5.0
CROSS_ALLOWANCE = 2.0
INTERSECT_ALLOWANCE = 15.0
AUX_MIN, AUX_MAX = 15.0, 100.0


class GeometryError(ValueError):
    """Invalid reference geometry or unbuildable design."""


class DesignError(ValueError):
    """A design violates its parameter bounds or cannot be built."""


class Param(str, Enum):
    ARC = "arc"
    SPLINE = "spline"


# --------------------------------------------------------------------------
# parameter tables
# --------------------------------------------------------------------------

def _ids(lo: int, hi: int) -> tuple[str, ...]:
    return tuple(f"P{i}" for i in range(lo, hi + 1))


# region -> parameterisation -> ordered ids (construction order)
REGION_PARAMS: dict[int, dict[Param, tuple[str, ...]]] = {
    2: {Param.ARC: ("P1", "P2"), Param.SPLINE: _ids(3, 7)},
    3: {Param.ARC: ("P8", "P9"), Param.SPLINE: _ids(10, 14)},
    4: {Param.ARC: ("P15", "P16"), Param.SPLINE: _ids(17, 23)},
    5: {Param.ARC: ("P24", "P25"), Param.SPLINE: _ids(26, 32)},
}

# Role of each spline parameter, in construction order.  Regions 2/3 place the
# aux subline relative to the near spline end point; regions 4/5 relative to
# the small-arc centre and add a middle control point.
SPLINE_ROLES = {
    2: ("angle", "length", "sub_near", "aux", "sub_far"),
    3: ("angle", "length", "sub_near", "aux", "sub_far"),
    4: ("angle", "length", "sub_near", "sub_far", "aux", "mid_u", "mid_n"),
    5: ("angle", "length", "sub_near", "aux", "sub_far", "mid_u", "mid_n"),
}
ARC_ROLES = ("angle", "radius")

# range-independent parameters and their static bounds
RI_BOUNDS: dict[str, tuple[float, float]] = {
    "P0": (10.0, 70.0),
    **{p: (50.0, 90.0) for p in ("P1", "P3", "P8", "P10")},
    **{p: (60.0, 100.0) for p in ("P15", "P17", "P24", "P26")},
}
RI_IDS = tuple(sorted(RI_BOUNDS, key=lambda p: int(p[1:])))

UNITS = {p: "deg" for p in RI_IDS if p != "P0"}


def param_unit(pid: str) -> str:
    return UNITS.get(pid, "mm")


@dataclass(frozen=True)
class RegionChoices:
    """Arc/spline choice for regions 2-5 (region 1 has a single form)."""

    region2: Param = Param.ARC
    region3: Param = Param.ARC
    region4: Param = Param.ARC
    region5: Param = Param.ARC

    def of(self, region: int) -> Param:
        return Param(getattr(self, f"region{region}"))

    @property
    def bits(self) -> str:
        return "".join("1" if self.of(r) is Param.SPLINE else "0" for r in (2, 3, 4, 5))

    @classmethod
    def from_bits(cls, bits: str) -> "RegionChoices":
        if len(bits) != 4 or set(bits) - {"0", "1"}:
            raise ValueError(f"bad parameterisation bits {bits!r}")
        vals = [Param.SPLINE if b == "1" else Param.ARC for b in bits]
        return cls(*vals)

    @classmethod
    def all(cls) -> list["RegionChoices"]:
        return [cls(*combo) for combo in itertools.product((Param.ARC, Param.SPLINE), repeat=4)]


def active_parameters(choices: RegionChoices) -> list[str]:
    """Ordered parameter ids active under ``choices`` (ascending by number)."""
    ids = ["P0"]
    for region in (2, 3, 4, 5):
        ids.extend(REGION_PARAMS[region][choices.of(region)])
    return sorted(ids, key=lambda p: int(p[1:]))


@dataclass(frozen=True)
class BlankDesign:
    choices: RegionChoices
    params: Mapping[str, float]

    def value(self, pid: str) -> float:
        try:
            return float(self.params[pid])
        except KeyError:
            raise DesignError(f"missing active parameter {pid}") from None


# --------------------------------------------------------------------------
# small vector helpers
# --------------------------------------------------------------------------

def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        raise GeometryError("zero-length direction")
    return v / n


def _perp(d: np.ndarray) -> np.ndarray:
    return np.array([-d[1], d[0]])


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _rot(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _intersect(p, d, q, e) -> tuple[float, float]:
    """Parameters (t, s) with p + t d = q + s e."""
    den = _cross(d, e)
    if abs(den) < 1e-12:
        raise GeometryError("parallel lines")
    w = np.asarray(q, float) - np.asarray(p, float)
    return _cross(w, e) / den, _cross(w, d) / den


def _arc_points(centre, start, sweep: float, radius: float, tol: float = CHORD_TOL) -> np.ndarray:
    """Points on an arc from ``start`` sweeping ``sweep`` rad (sign = direction)."""
    if radius <= tol:
        n = 1
    else:
        max_step = 2.0 * math.acos(1.0 - tol / radius)
        n = max(1, math.ceil(abs(sweep) / max_step))
    rel = np.asarray(start, float) - centre
    angles = np.linspace(0.0, sweep, n + 1)
    c, s = np.cos(angles), np.sin(angles)
    return centre + np.stack([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]], axis=1)


def bezier_points(ctrl: np.ndarray, tol: float = CHORD_TOL) -> np.ndarray:
    """Uniformly flatten a Bézier curve so the chord error stays below ``tol``."""
    ctrl = np.asarray(ctrl, float)
    deg = len(ctrl) - 1
    if deg < 2:
        return ctrl.copy()
    second = np.diff(ctrl, n=2, axis=0)
    bound = deg * (deg - 1) * np.max(np.hypot(second[:, 0], second[:, 1]))
    n = max(2, math.ceil(math.sqrt(bound / (8.0 * tol)))) if bound > 0 else 2
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    coeff = np.array([math.comb(deg, k) for k in range(deg + 1)], float)
    basis = coeff * t ** np.arange(deg + 1) * (1.0 - t) ** (deg - np.arange(deg + 1))
    return basis @ ctrl


# --------------------------------------------------------------------------
# reference geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionAnchor:
    """Anchor data of one transition corner (regions 2-5)."""

    region: int
    corner: np.ndarray
    arc_dir: np.ndarray  # unit, along the arc line towards the corner
    other_dir: np.ndarray  # unit, along the other line away from the corner
    attach: float  # distance from corner back to the small-arc start
    small_radius: float
    far: float  # usable length of the other line from the corner
    reverse: bool  # small arc sits on the outgoing edge

    @property
    def turn_sign(self) -> float:
        return 1.0 if _cross(self.arc_dir, self.other_dir) > 0 else -1.0

    @property
    def start(self) -> np.ndarray:
        return self.corner - self.attach * self.arc_dir


@dataclass(frozen=True)
class ReferenceGeometry:
    vertices: np.ndarray  # sharp outline, CCW, (n, 2)
    tags: tuple[str, ...]  # "" or r1a/r1b/r2..r5 per vertex
    edge_normal: np.ndarray  # region-1 outward unit normal
    dashed_point: np.ndarray  # a point on the fixed dashed subline
    side_a: tuple[np.ndarray, np.ndarray]  # line through r1a's predecessor
    side_b: tuple[np.ndarray, np.ndarray]  # line through r1b's successor
    regions: dict[int, RegionAnchor] = field(default_factory=dict)
    reference_design: "BlankDesign | None" = None

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def region1_edge(self, p0: float) -> tuple[np.ndarray, np.ndarray]:
        """End points of the region-1 edge at distance ``p0`` from the dashed line."""
        n = self.edge_normal
        d = _perp(n)  # along the edge
        base = self.dashed_point + p0 * n
        ends = []
        for q, e in (self.side_a, self.side_b):
            t, _ = _intersect(base, d, q, e)
            ends.append(base + t * d)
        return ends[0], ends[1]


def _parse_vertices(text: str) -> tuple[np.ndarray, tuple[str, ...]]:
    pts, tags = [], []
    for line in text.strip().splitlines():
        parts = line.replace(",", " ").split()
        if not parts:
            continue
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad outline vertex line {line!r}")
        pts.append((float(parts[0]), float(parts[1])))
        tags.append(parts[2] if len(parts) == 3 else "")
    return np.array(pts, float), tuple(tags)


def build_reference(config: Config) -> ReferenceGeometry:
    """Build and validate the reference geometry from a geometry config."""
    vertices, tags = _parse_vertices(config.raw("outline", "vertices"))
    n = len(vertices)
    if n < 4:
        raise GeometryError("outline needs at least 4 vertices")
    for tag in ("r1a", "r1b", "r2", "r3", "r4", "r5"):
        if tags.count(tag) != 1:
            raise GeometryError(f"outline must tag exactly one vertex {tag!r}")

    normal = _unit(config.get_floats("region_1", "normal"))
    dashed = np.array(config.get_floats("region_1", "dashed_point"), float)
    ia, ib = tags.index("r1a"), tags.index("r1b")
    if ib != (ia + 1) % n:
        raise GeometryError("r1b must directly follow r1a")
    side_a = (vertices[ia - 1], _unit(vertices[ia] - vertices[ia - 1]))
    side_b = (vertices[(ib + 1) % n], _unit(vertices[ib] - vertices[(ib + 1) % n]))
    edge_dir = _unit(vertices[ib] - vertices[ia])
    if abs(float(edge_dir @ normal)) > 1e-3 or _cross(edge_dir, normal) > 0:
        raise GeometryError("region 1 normal must be the outward normal of the r1a-r1b edge")

    regions: dict[int, RegionAnchor] = {}
    for region in (2, 3, 4, 5):
        sec = f"region_{region}"
        k = tags.index(f"r{region}")
        prev_v, corner, next_v = vertices[k - 1], vertices[k], vertices[(k + 1) % n]
        if np.allclose(prev_v, corner) or np.allclose(next_v, corner):
            raise GeometryError(f"degenerate edge at region {region}")
        d_in = _unit(corner - prev_v)
        next_dir = _unit(next_v - corner)
        if abs(_cross(d_in, next_dir)) < 1e-6:
            raise GeometryError(f"parallel anchors, region {region}")
        side = config.get_str(sec, "arc_line", "in")
        if side == "in":
            arc_dir, other_dir, far_len = d_in, next_dir, float(np.linalg.norm(next_v - corner))
            reverse = False
        elif side == "out":
            arc_dir, other_dir, far_len = -next_dir, -d_in, float(np.linalg.norm(corner - prev_v))
            reverse = True
        else:
            raise ConfigError(f"[{sec}] arc_line must be 'in' or 'out'")
        anchor = RegionAnchor(
            region=region,
            corner=corner.copy(),
            arc_dir=arc_dir,
            other_dir=other_dir,
            attach=config.get_float(sec, "attach"),
            small_radius=config.get_float(sec, "small_radius"),
            far=far_len - config.get_float(sec, "far_margin", 0.0),
            reverse=reverse,
        )
        regions[region] = anchor

    ref = ReferenceGeometry(
        vertices=vertices,
        tags=tags,
        edge_normal=normal,
        dashed_point=dashed,
        side_a=side_a,
        side_b=side_b,
        regions=regions,
    )
    _check_polygon(vertices, "reference outline")
    if config.has_section("reference_design"):
        object.__setattr__(ref, "reference_design", design_from_config(config, "reference_design"))
    return ref


def design_from_config(config: Config, section: str) -> BlankDesign:
    choices = RegionChoices.from_bits(config.get_str(section, "bits"))
    params = {}
    for key in config.keys(section):
        if key.startswith("P") and key[1:].isdigit():
            params[key] = config.get_float(section, key)
    return BlankDesign(choices, params)


# --------------------------------------------------------------------------
# polygon validity
# --------------------------------------------------------------------------

def signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def self_intersections(points: np.ndarray) -> list[tuple[int, int]]:
    """Pairs of non-adjacent closed-polyline segments that intersect (O(n^2))."""
    p = np.asarray(points, float)
    q = np.roll(p, -1, axis=0)
    n = len(p)
    d = q - p
    # orientation tests for all pairs
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    A, B = p[:, None, :], q[:, None, :]
    C, D = p[None, :, :], q[None, :, :]
    o1 = orient(A, B, C)
    o2 = orient(A, B, D)
    o3 = orient(C, D, A)
    o4 = orient(C, D, B)
    scale = np.max(np.abs(d)) ** 2 + 1.0
    eps = 1e-12 * scale
    hit = (o1 * o2 <= eps) & (o3 * o4 <= eps)
    # collinear overlap filter: require bounding boxes to overlap
    bb = (
        (np.minimum(A[..., 0], B[..., 0]) <= np.maximum(C[..., 0], D[..., 0]) + 1e-9)
        & (np.minimum(C[..., 0], D[..., 0]) <= np.maximum(A[..., 0], B[..., 0]) + 1e-9)
        & (np.minimum(A[..., 1], B[..., 1]) <= np.maximum(C[..., 1], D[..., 1]) + 1e-9)
        & (np.minimum(C[..., 1], D[..., 1]) <= np.maximum(A[..., 1], B[..., 1]) + 1e-9)
    )
    hit &= bb
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    mask = hit[i, j]
    return [(int(a), int(b)) for a, b in zip(i[mask], j[mask])]


def _check_polygon(points: np.ndarray, what: str) -> None:
    pairs = self_intersections(points)
    if pairs:
        a, b = pairs[0]
        raise GeometryError(f"{what} self-intersects: segments {a} and {b}")
    if signed_area(points) <= 0:
        raise GeometryError(f"{what} is not counter-clockwise")


# --------------------------------------------------------------------------
# transition corner construction with sequential bound formulas
# --------------------------------------------------------------------------

@dataclass
class _Corner:
    """Incremental construction state for one transition corner."""

    anchor: RegionAnchor
    theta: float  # small-arc angle, rad
    a1: np.ndarray = None
    d1: np.ndarray = None
    centre: np.ndarray = None
    y_cross: np.ndarray = None  # in-between line extension x other line
    t_cross: float = 0.0  # distance a1 -> y_cross along d1
    s_cross: float = 0.0  # signed distance corner -> y_cross along other line

    def __post_init__(self):
        an = self.anchor
        sgn = an.turn_sign
        a0 = an.start
        self.centre = a0 + an.small_radius * sgn * _perp(an.arc_dir)
        self.a1 = self.centre + _rot(a0 - self.centre, sgn * self.theta)
        self.d1 = _rot(an.arc_dir, sgn * self.theta)
        try:
            t, s = _intersect(self.a1, self.d1, an.corner, an.other_dir)
        except GeometryError:
            t, s = -1.0, 0.0
        self.t_cross, self.s_cross = t, s
        self.y_cross = self.a1 + t * self.d1

    @property
    def phi(self) -> float:
        """Signed turn from the in-between line to the other line."""
        o = self.anchor.other_dir
        return math.atan2(_cross(self.d1, o), float(self.d1 @ o))

    def small_arc(self) -> np.ndarray:
        an = self.anchor
        return _arc_points(self.centre, an.start, an.turn_sign * self.theta, an.small_radius)

    # -- arc chain --------------------------------------------------------
    def radius_bounds(self) -> tuple[float, float]:
        half = math.tan(abs(self.phi) / 2.0)
        if half <= 1e-9:
            return MIN_LINE, -math.inf
        hi_line = (self.t_cross - MIN_LINE) / half
        hi_far = (self.anchor.far - self.s_cross - MIN_LINE) / half
        return MIN_LINE, min(hi_line, hi_far)

    def arc_chain(self, radius: float) -> np.ndarray:
        tau = radius * math.tan(abs(self.phi) / 2.0)
        t1 = self.y_cross - tau * self.d1
        sgn = 1.0 if self.phi > 0 else -1.0
        centre = t1 + radius * sgn * _perp(self.d1)
        main = _arc_points(centre, t1, self.phi, radius)
        return np.vstack([self.small_arc(), main])

    # -- spline -----------------------------------------------------------
    def length_bounds(self) -> tuple[float, float]:
        return MIN_LINE, self.t_cross - INTERSECT_ALLOWANCE

    def near_end(self, length: float) -> np.ndarray:
        return self.a1 + length * self.d1

    def sub_near_bounds(self, length: float) -> tuple[float, float]:
        return MIN_SUBLINE, self.t_cross - length - CROSS_ALLOWANCE

    def aux_bounds(self, origin: np.ndarray) -> tuple[float, float]:
        an = self.anchor
        s_origin = float((origin - an.corner) @ an.other_dir)
        offset = s_origin - self.s_cross
        lo = max(0.0, AUX_MIN - offset)
        hi = min(AUX_MAX - offset, an.far - MIN_LINE - s_origin)
        return lo, hi

    def far_end(self, origin: np.ndarray, aux: float) -> np.ndarray:
        an = self.anchor
        s_origin = float((origin - an.corner) @ an.other_dir)
        return an.corner + (s_origin + aux) * an.other_dir

    def sub_far_bounds(self, far_end: np.ndarray) -> tuple[float, float]:
        an = self.anchor
        room = float((far_end - an.corner) @ an.other_dir) - self.s_cross
        return MIN_SUBLINE, room - CROSS_ALLOWANCE

    def mid_frame(self, c_near: np.ndarray, c_far: np.ndarray):
        u = _unit(c_far - c_near)
        nrm = _perp(u)
        mid = 0.5 * (c_near + c_far)
        if float((self.y_cross - mid) @ nrm) > 0:
            nrm = -nrm
        rho = 0.5 * float(np.linalg.norm(c_far - c_near))
        return u, nrm, mid, rho

    def mid_u_bounds(self, c_near, c_far) -> tuple[float, float]:
        u, _, _, _ = self.mid_frame(c_near, c_far)
        return float((c_near - self.centre) @ u), float((c_far - self.centre) @ u)

    def mid_n_bounds(self, c_near, c_far, mid_u: float) -> tuple[float, float]:
        u, nrm, mid, rho = self.mid_frame(c_near, c_far)
        h0 = float((c_near - self.centre) @ nrm)
        m_u = float((mid - self.centre) @ u)
        half = math.sqrt(max(0.0, rho * rho - (mid_u - m_u) ** 2))
        return h0, h0 + half

    def mid_point(self, c_near, c_far, mid_u: float, mid_n: float) -> np.ndarray:
        u, nrm, _, _ = self.mid_frame(c_near, c_far)
        return self.centre + mid_u * u + mid_n * nrm


class _Walker:
    """Walk a region's parameters in construction order.

    ``resolve(pid, lo, hi)`` supplies each parameter's value given its bounds;
    the same walk therefore serves validation (record violations), sampling
    (map unit draws into ranges) and contour construction.
    """

    def __init__(self, anchor: RegionAnchor, kind: Param, ids: tuple[str, ...], resolve):
        self.anchor, self.kind, self.ids, self.resolve = anchor, kind, ids, resolve

    def run(self) -> np.ndarray | None:
        region = self.anchor.region
        if self.kind is Param.ARC:
            roles = dict(zip(ARC_ROLES, self.ids))
        else:
            roles = dict(zip(SPLINE_ROLES[region], self.ids))
        lo, hi = RI_BOUNDS[roles["angle"]]
        theta_deg = self.resolve(roles["angle"], lo, hi)
        if theta_deg is None:
            return None
        corner = _Corner(self.anchor, math.radians(theta_deg))
        if corner.t_cross <= 0 or corner.s_cross >= self.anchor.far:
            raise DesignError(f"region {region}: in-between line misses the anchor line")
        if self.kind is Param.ARC:
            lo, hi = corner.radius_bounds()
            r = self.resolve(roles["radius"], lo, hi)
            return None if r is None else corner.arc_chain(r)

        length = self.resolve(roles["length"], *corner.length_bounds())
        if length is None:
            return None
        e_near = corner.near_end(length)
        sub_near = self.resolve(roles["sub_near"], *corner.sub_near_bounds(length))
        if sub_near is None:
            return None
        c_near = e_near + sub_near * corner.d1
        if region in (2, 3):
            aux = self.resolve(roles["aux"], *corner.aux_bounds(e_near))
            if aux is None:
                return None
            e_far = corner.far_end(e_near, aux)
            sub_far = self.resolve(roles["sub_far"], *corner.sub_far_bounds(e_far))
            if sub_far is None:
                return None
            c_far = e_far - sub_far * self.anchor.other_dir
            ctrl = np.array([e_near, c_near, c_far, e_far])
        else:
            # far subline is drawn before the aux distance in id order; its
            # range needs the far end, so resolve aux first then sub_far.
            aux_id, sub_far_id = roles["aux"], roles["sub_far"]
            aux = self.resolve(aux_id, *corner.aux_bounds(corner.centre))
            if aux is None:
                return None
            e_far = corner.far_end(corner.centre, aux)
            sub_far = self.resolve(sub_far_id, *corner.sub_far_bounds(e_far))
            if sub_far is None:
                return None
            c_far = e_far - sub_far * self.anchor.other_dir
            mid_u = self.resolve(roles["mid_u"], *corner.mid_u_bounds(c_near, c_far))
            if mid_u is None:
                return None
            mid_n = self.resolve(roles["mid_n"], *corner.mid_n_bounds(c_near, c_far, mid_u))
            if mid_n is None:
                return None
            mid = corner.mid_point(c_near, c_far, mid_u, mid_n)
            ctrl = np.array([e_near, c_near, mid, c_far, e_far])
        curve = bezier_points(ctrl)
        straight = np.vstack([corner.small_arc(), curve])
        return straight


def rd_order(region: int, kind: Param) -> tuple[str, ...]:
    """Range-dependent ids of one region in the order their ranges resolve."""
    ids = REGION_PARAMS[region][kind]
    if kind is Param.ARC:
        return ids[1:]
    roles = dict(zip(SPLINE_ROLES[region], ids))
    if region in (2, 3):
        order = ("length", "sub_near", "aux", "sub_far")
    else:
        order = ("length", "sub_near", "aux", "sub_far", "mid_u", "mid_n")
    return tuple(roles[r] for r in order)


def design_rd_order(choices: RegionChoices) -> list[str]:
    out: list[str] = []
    for region in (2, 3, 4, 5):
        out.extend(rd_order(region, choices.of(region)))
    return out


def _region_curve(anchor: RegionAnchor, kind: Param, ids, resolve) -> np.ndarray | None:
    pts = _Walker(anchor, kind, ids, resolve).run()
    if pts is None:
        return None
    return pts[::-1] if anchor.reverse else pts


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

BOUND_TOL = 1e-9


def validate_design(design: BlankDesign, ref: ReferenceGeometry) -> list[str]:
    """Return a list of bound violations (empty list means the design is ok)."""
    violations: list[str] = []
    active = active_parameters(design.choices)
    extra = sorted(set(design.params) - set(active), key=lambda p: int(p[1:]))
    for pid in extra:
        violations.append(f"{pid} not active under parameterisation {design.choices.bits}")
    missing = [p for p in active if p not in design.params]
    for pid in missing:
        violations.append(f"{pid} missing")
    if missing:
        return violations

    def check(pid: str, lo: float, hi: float):
        v = float(design.params[pid])
        unit = param_unit(pid)
        if not math.isfinite(v):
            violations.append(f"{pid} not finite")
        elif lo > hi + BOUND_TOL:
            violations.append(f"{pid} has an empty range [{lo:.6g}, {hi:.6g}] {unit}")
        elif v < lo - BOUND_TOL:
            violations.append(f"{pid} below {lo:.6g} {unit}")
        elif v > hi + BOUND_TOL:
            violations.append(f"{pid} above {hi:.6g} {unit}")
        return v

    check("P0", *RI_BOUNDS["P0"])
    for region in (2, 3, 4, 5):
        kind = design.choices.of(region)
        try:
            _Walker(ref.regions[region], kind, REGION_PARAMS[region][kind], check).run()
        except (DesignError, GeometryError) as exc:
            violations.append(str(exc))
    return violations


def build_contour(design: BlankDesign, ref: ReferenceGeometry) -> np.ndarray:
    """Closed CCW polyline (n, 2) in mm for ``design``; last point != first."""
    for pid in active_parameters(design.choices):
        if pid not in design.params:
            raise DesignError(f"missing active parameter {pid}")
    problems = validate_design(design, ref)
    if problems:
        raise DesignError("; ".join(problems))

    def take(pid: str, lo: float, hi: float) -> float:
        return float(design.params[pid])

    e1a, e1b = ref.region1_edge(design.value("P0"))
    pieces: list[np.ndarray] = []
    owner: list[int] = []
    for k, tag in enumerate(ref.tags):
        if tag == "r1a":
            pts, region = e1a[None, :], 1
        elif tag == "r1b":
            pts, region = e1b[None, :], 1
        elif tag in ("r2", "r3", "r4", "r5"):
            region = int(tag[1])
            kind = design.choices.of(region)
            pts = _region_curve(ref.regions[region], kind, REGION_PARAMS[region][kind], take)
        else:
            pts, region = ref.vertices[k][None, :], 0
        pieces.append(pts)
        owner.extend([region] * len(pts))
    contour = np.vstack(pieces)
    owner_arr = np.array(owner)
    # drop consecutive duplicates
    keep = np.ones(len(contour), bool)
    keep[1:] = np.any(np.abs(np.diff(contour, axis=0)) > 1e-9, axis=1)
    if np.all(np.abs(contour[-1] - contour[0]) <= 1e-9):
        keep[-1] = False
    contour, owner_arr = contour[keep], owner_arr[keep]
    pairs = self_intersections(contour)
    if pairs:
        a, b = pairs[0]
        regions = sorted({int(owner_arr[a]), int(owner_arr[b])} - {0}) or [0]
        raise DesignError(f"contour self-intersects in region {regions[0]}")
    return contour


def midrange_design(choices: RegionChoices, ref: ReferenceGeometry, frac: float = 0.5) -> BlankDesign:
    """Design with every parameter at ``frac`` of its (sequential) range."""
    params: dict[str, float] = {}

    def pick(pid: str, lo: float, hi: float) -> float:
        v = lo + frac * (hi - lo)
        params[pid] = v
        return v

    lo, hi = RI_BOUNDS["P0"]
    params["P0"] = lo + frac * (hi - lo)
    for region in (2, 3, 4, 5):
        kind = choices.of(region)
        _Walker(ref.regions[region], kind, REGION_PARAMS[region][kind], pick).run()
    return BlankDesign(choices, params)


def design_from_unit(
    choices: RegionChoices,
    ref: ReferenceGeometry,
    ri_unit: Mapping[str, float],
    rd_unit: Mapping[str, float],
) -> BlankDesign | None:
    """Map unit-cube draws into a design; ``None`` if a range is degenerate."""
    params: dict[str, float] = {}

    def pick(pid: str, lo: float, hi: float):
        u = ri_unit[pid] if pid in RI_BOUNDS else rd_unit[pid]
        if lo > hi:
            return None
        v = lo + u * (hi - lo)
        params[pid] = v
        return v

    pick("P0", *RI_BOUNDS["P0"])
    for region in (2, 3, 4, 5):
        kind = choices.of(region)
        try:
            out = _Walker(ref.regions[region], kind, REGION_PARAMS[region][kind], pick).run()
        except (DesignError, GeometryError):
            return None
        if out is None:
            return None
    return BlankDesign(choices, params)


def contour_area(contour: np.ndarray) -> float:
    return abs(signed_area(contour))
