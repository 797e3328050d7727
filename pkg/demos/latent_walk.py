"""Walk the auto-decoder's latent space between two training shapes.

Needs a workdir where ``blankopt train-autodecoder`` has run.  Decodes the
two end latents and eight interpolants, reports the iso-contour count and
enclosed area of each, and writes the decoded SDFs as PGM images.

    python3 demos/latent_walk.py WORKDIR [ID_A ID_B]
"""
import sys
from pathlib import Path

import numpy as np

from blankopt import autodecoder as ad
from blankopt.fields import count_closed_contours, export_pgm, extract_contour
from blankopt.geometry import signed_area


def main(workdir, id_a=None, id_b=None):
    wd = Path(workdir)
    model, _, _ = ad.load_decoder(wd / "models" / "autodecoder.nnck")
    z = np.load(wd / "models" / "latents_train.npy")
    ids = (wd / "models" / "latents_train.ids").read_text().split()
    a = ids.index(id_a) if id_a else 0
    b = ids.index(id_b) if id_b else 1
    chain = [z[a], *ad.interpolate_latents(z[a], z[b], k=8), z[b]]
    out = wd / "reports" / "latent_walk"
    out.mkdir(parents=True, exist_ok=True)
    print(f"walking {ids[a]} -> {ids[b]}")
    for i, grid in enumerate(ad.decode_many(model, np.stack(chain))):
        closed, open_ = count_closed_contours(grid)
        area = signed_area(extract_contour(grid)) if closed else float("nan")
        print(f"step {i}: {closed} closed / {open_} open contours, area {area / 1e6:.4f} m^2")
        export_pgm(grid, out / f"step_{i}.pgm")
    print(f"images in {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
