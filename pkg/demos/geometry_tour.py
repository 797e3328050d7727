"""Tour of the 16 blank parameterisations.

Builds the mid-range design of every arc/spline combination, rasterises it
on the desk grid, runs the forming oracle and prints the maxima.  SDF and
thinning images go to the output directory as PGM files.

    python3 demos/geometry_tour.py [outdir]
"""
import sys
from pathlib import Path

from blankopt.config import Config
from blankopt.fields import GridSpec, count_closed_contours, export_pgm, rasterize_sdf
from blankopt.geometry import RegionChoices, build_contour, build_reference, midrange_design
from blankopt.oracle import OracleConfig, simulate


def main(outdir="geometry_tour"):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    config = Config.default()
    ref = build_reference(config)
    spec = GridSpec.around(ref.bbox, config.get_int("grid", "height"), config.get_int("grid", "width"),
                           config.get_float("grid", "margin"))
    oracle = OracleConfig.from_config(config)
    print(f"grid {spec.height}x{spec.width}, {spec.spacing:.3f} mm per pixel")
    print("bits  points  loops  max_thin  max_thick  meets 0.15/0.10")
    for choices in RegionChoices.all():
        contour = build_contour(midrange_design(choices, ref), ref)
        sdf = rasterize_sdf(contour, spec)
        res = simulate(sdf, oracle)
        closed, _ = count_closed_contours(sdf)
        print(f"{choices.bits}  {len(contour):6d}  {closed:5d}  {res.max_thinning:8.4f}  "
              f"{res.max_thickening:9.4f}  {'yes' if res.passes else 'no'}")
        export_pgm(sdf, out / f"sdf_{choices.bits}.pgm")
        export_pgm(res.field, out / f"thinning_{choices.bits}.pgm")
    print(f"images in {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
