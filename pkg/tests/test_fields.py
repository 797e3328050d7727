import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image
from shapely.geometry import Point, Polygon
from skimage import measure

from blankopt.fields import (
    GridError,
    GridKind,
    GridSpec,
    ScalarGrid,
    augment_pairs,
    count_closed_contours,
    export_csv,
    export_pgm,
    extract_contour,
    flip,
    grid_from_bytes,
    grid_to_bytes,
    iso_polylines,
    polyline_length,
    rasterize_sdf,
    read_grid,
    write_grid,
)
from blankopt.geometry import build_contour, midrange_design, RegionChoices, signed_area

SMALL = GridSpec(40, 60, (-5.0, -5.0), 1.0)


def circle(cx, cy, r, n=720):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def square(x0, y0, s):
    return np.array([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]], float)


# -- grid spec ----------------------------------------------------------------------

def test_grid_minimum_size():
    with pytest.raises(GridError, match="at least 8x8"):
        GridSpec(7, 20)
    GridSpec(8, 8)


def test_around_centres_bbox(ref, config):
    spec = GridSpec.around(ref.bbox, 152, 280, 40.0)
    X, Y = spec.centres()
    x0, y0, x1, y1 = ref.bbox
    assert 0.5 * (X[0, 0] + X[0, -1]) == pytest.approx(0.5 * (x0 + x1))
    assert 0.5 * (Y[0, 0] + Y[-1, 0]) == pytest.approx(0.5 * (y0 + y1))
    # margin at least 40 mm on both axes, exactly on the binding one
    gaps = [x0 - X[0, 0], X[0, -1] - x1, y0 - Y[0, 0], Y[-1, 0] - y1]
    assert min(gaps) == pytest.approx(40.0)
    assert spec.spacing == pytest.approx(max((1100 + 80) / 279, (600 + 80) / 151))


def test_to_pixel_round_trip():
    X, Y = SMALL.centres()
    rc = SMALL.to_pixel(np.stack([X, Y], axis=-1))
    rows, cols = np.indices(SMALL.shape)
    assert np.allclose(rc[..., 0], rows) and np.allclose(rc[..., 1], cols)


def test_values_shape_checked():
    with pytest.raises(GridError, match="does not match"):
        ScalarGrid(SMALL, np.zeros((3, 3)))


# -- rasterization -----------------------------------------------------------------

def test_circle_sdf_matches_analytic():
    c = circle(25.0, 15.0, 9.0, n=4000)
    sdf = rasterize_sdf(c, SMALL)
    X, Y = SMALL.centres()
    exact = np.hypot(X - 25.0, Y - 15.0) - 9.0
    # polygon sagitta of the 4000-gon is r(1-cos(pi/n)) ~ 3e-6
    assert np.abs(sdf.values - exact).max() < 1e-4


def test_sdf_against_shapely(ref, desk_spec):
    contour = build_contour(ref.reference_design, ref)
    sdf = rasterize_sdf(contour, desk_spec)
    poly = Polygon(contour)
    X, Y = desk_spec.centres()
    rng = np.random.default_rng(5)
    for i, j in zip(rng.integers(0, 152, 200), rng.integers(0, 280, 200)):
        p = Point(X[i, j], Y[i, j])
        d = poly.exterior.distance(p)
        expect = -d if poly.contains(p) else d
        assert sdf.values[i, j] == pytest.approx(expect, abs=1e-3)


def test_sdf_sign_convention():
    sdf = rasterize_sdf(square(10, 10, 20), SMALL)
    X, Y = SMALL.centres()
    assert sdf.values[(X == 20) & (Y == 20)] == pytest.approx(-10.0)
    assert sdf.values[(X == 0) & (Y == 0)] == pytest.approx(np.hypot(10, 10), rel=1e-6)
    assert sdf.values[(X == 10) & (Y == 20)] == 0.0
    assert sdf.kind == GridKind.SDF and sdf.values.dtype == np.float64


def test_orientation_does_not_matter():
    s = square(3, 4, 17)
    a = rasterize_sdf(s, SMALL).values
    b = rasterize_sdf(s[::-1], SMALL).values
    assert np.array_equal(a, b)


@pytest.mark.parametrize("bad", [np.zeros((2, 2)), np.array([[0, 0], [1, 1], [2, 2]]), np.zeros((4, 3))])
def test_open_or_degenerate_contours_rejected(bad):
    with pytest.raises(GridError):
        rasterize_sdf(bad, SMALL)


@given(cx=st.floats(15, 40), cy=st.floats(12, 22), r=st.floats(4, 9))
def test_sdf_is_one_lipschitz(cx, cy, r):
    v = rasterize_sdf(circle(cx, cy, r, n=200), SMALL).values.astype(float)
    assert np.abs(np.diff(v, axis=0)).max() <= 1.0 + 1e-5
    assert np.abs(np.diff(v, axis=1)).max() <= 1.0 + 1e-5


# -- marching squares ------------------------------------------------------------------

def _skimage_contours(grid):
    return measure.find_contours(grid.values.astype(float), 0.0)


def test_extracted_contour_matches_skimage(ref, desk_spec):
    sdf = rasterize_sdf(build_contour(ref.reference_design, ref), desk_spec)
    ours = extract_contour(sdf)
    theirs = max(_skimage_contours(sdf), key=len)
    s = desk_spec
    theirs_xy = np.stack([s.origin[0] + theirs[:, 1] * s.spacing, s.origin[1] + theirs[:, 0] * s.spacing], 1)
    assert polyline_length(ours) == pytest.approx(polyline_length(theirs_xy[:-1]), rel=1e-6)
    assert abs(signed_area(ours)) == pytest.approx(abs(signed_area(theirs_xy[:-1])), rel=1e-6)
    assert signed_area(ours) > 0


def test_extracted_contour_is_close_to_source(ref, desk_spec):
    contour = build_contour(ref.reference_design, ref)
    ext = extract_contour(rasterize_sdf(contour, desk_spec))
    ring = Polygon(contour).exterior
    # linear interpolation of an exact SDF stays within a fraction of a pixel
    worst = max(ring.distance(Point(p)) for p in ext)
    assert worst < 0.5 * desk_spec.spacing


def test_counts_match_skimage_for_two_blobs():
    X, Y = SMALL.centres()
    v = np.minimum(np.hypot(X - 10, Y - 12) - 5, np.hypot(X - 38, Y - 20) - 7)
    grid = ScalarGrid(SMALL, v)
    closed, opened = count_closed_contours(grid)
    sk = _skimage_contours(grid)
    assert closed == sum(1 for c in sk if np.allclose(c[0], c[-1])) == 2
    assert opened == 0


def test_open_line_at_border_is_counted_open():
    X, Y = SMALL.centres()
    grid = ScalarGrid(SMALL, Y - 10.3)  # a horizontal line across the grid
    assert count_closed_contours(grid) == (0, 1)
    with pytest.raises(GridError, match="empty level set"):
        extract_contour(grid)


def test_empty_level_set():
    grid = ScalarGrid(SMALL, np.ones(SMALL.shape))
    assert count_closed_contours(grid) == (0, 0)
    with pytest.raises(GridError, match="empty level set"):
        extract_contour(grid)


def test_saddle_cases_resolved_consistently():
    # a 2x2 checker inside a larger grid is the ambiguous case
    v = np.ones((8, 8))
    v[3, 3] = v[4, 4] = -1.0
    lines = iso_polylines(ScalarGrid(GridSpec(8, 8), v))
    # centre value is +1 (outside): the two blobs stay separate
    assert sum(1 for _, c in lines if c) == 2


def test_iso_points_lie_on_cell_edges():
    X, Y = SMALL.centres()
    grid = ScalarGrid(SMALL, np.hypot(X - 20, Y - 15) - 6.5)
    for pts, _ in iso_polylines(grid):
        rc = SMALL.to_pixel(pts)
        on_edge = np.isclose(rc, np.round(rc), atol=1e-9).any(axis=1)
        assert on_edge.all()


# -- flips --------------------------------------------------------------------------------

@pytest.mark.parametrize("axis", ["horizontal", "vertical", "both"])
def test_flip_is_an_involution(axis, rng):
    g = ScalarGrid(SMALL, rng.normal(size=SMALL.shape))
    assert np.array_equal(flip(flip(g, axis), axis).values, g.values)


def test_flip_semantics(rng):
    g = ScalarGrid(SMALL, rng.normal(size=SMALL.shape))
    assert np.array_equal(flip(g, "horizontal").values, np.fliplr(g.values))
    assert np.array_equal(flip(g, "vertical").values, np.flipud(g.values))
    assert np.array_equal(flip(g, "both").values, np.rot90(g.values, 2))
    with pytest.raises(ValueError, match="unknown flip axis"):
        flip(g, "diagonal")


def test_augment_pairs_quadruples_and_keeps_pairing(rng):
    pairs = [(ScalarGrid(SMALL, rng.normal(size=SMALL.shape)),
              ScalarGrid(SMALL, rng.normal(size=SMALL.shape), GridKind.THINNING)) for _ in range(3)]
    out = augment_pairs(pairs)
    assert len(out) == 12
    for k, (a, b) in enumerate(out):
        src_a, src_b = pairs[k % 3]
        # the same index permutation is applied to both members
        perm = {0: lambda x: x, 1: np.fliplr, 2: np.flipud, 3: lambda x: np.rot90(x, 2)}[k // 3]
        assert np.array_equal(a.values, perm(src_a.values))
        assert np.array_equal(b.values, perm(src_b.values))
        assert b.kind == GridKind.THINNING


# -- FGRD I/O ----------------------------------------------------------------------------

def test_round_trip_is_bit_exact(tmp_path, rng):
    g = ScalarGrid(GridSpec(9, 13, (1.5, -2.25), 0.75), rng.normal(size=(9, 13)), GridKind.THINNING)
    write_grid(g, tmp_path / "g.fgrd")
    back = read_grid(tmp_path / "g.fgrd")
    # files hold float32; after that one rounding the round trip is exact
    assert np.array_equal(back.values, g.values.astype(np.float32))
    assert back.spec == g.spec and back.kind == g.kind
    write_grid(back, tmp_path / "h.fgrd")
    assert (tmp_path / "h.fgrd").read_bytes() == (tmp_path / "g.fgrd").read_bytes()


def test_header_layout(rng):
    g = ScalarGrid(GridSpec(8, 10, (1.0, 2.0), 0.5), rng.normal(size=(8, 10)))
    raw = grid_to_bytes(g)
    assert raw[:4] == b"FGRD"
    assert int.from_bytes(raw[4:6], "little") == 1
    assert len(raw) == 4 + 2 + 1 + 1 + 4 + 4 + 8 * 3 + 4 * 80


@pytest.mark.parametrize("mutate,msg", [
    (lambda b: b"XXXX" + b[4:], "bad magic"),
    (lambda b: b[:4] + (9).to_bytes(2, "little") + b[6:], "bad version"),
    (lambda b: b[:10], "short read"),
    (lambda b: b[:-4], "short read"),
])
def test_corrupt_files_rejected(mutate, msg, rng):
    g = ScalarGrid(GridSpec(8, 8), rng.normal(size=(8, 8)))
    with pytest.raises(GridError, match=msg):
        grid_from_bytes(mutate(grid_to_bytes(g)))


def test_export_csv(tmp_path, rng):
    g = ScalarGrid(GridSpec(8, 9), rng.normal(size=(8, 9)))
    export_csv(g, tmp_path / "g.csv")
    back = np.loadtxt(tmp_path / "g.csv", delimiter=",")
    assert np.allclose(back, g.values, rtol=1e-5, atol=1e-6)


def test_export_pgm_reads_back_with_pillow(tmp_path):
    v = np.tile(np.arange(10, dtype=float), (8, 1))
    v[0, :] = 0.0  # bottom row (lowest y) should appear at the image bottom
    export_pgm(ScalarGrid(GridSpec(8, 10), v), tmp_path / "g.pgm")
    img = np.asarray(Image.open(tmp_path / "g.pgm"))
    assert img.shape == (8, 10)
    assert img[0, -1] == 255 and img[-1, -1] == 0 and img[0, 0] == 0


def test_midrange_all_choices_single_contour(ref, desk_spec):
    for c in RegionChoices.all():
        sdf = rasterize_sdf(build_contour(midrange_design(c, ref), ref), desk_spec)
        assert count_closed_contours(sdf) == (1, 0)
