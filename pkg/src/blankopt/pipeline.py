"""End-to-end pipeline stages over a working directory.

Every stage reads its inputs from the working directory, writes its outputs
there and stamps the config hash into them.  Stages fail with
:class:`MissingArtifact` when an upstream output is absent.

Layout::

    manifest.tsv             one record per sampled design
    results.tsv              oracle maxima per record
    grids/                   FGRD files (SDF and thinning fields)
    models/                  NNCK and SSMF models, latent tables, loss curves
    reports/                 evaluation table, optimisation traces
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import autodecoder as ad
from . import iaism, saism
from .config import Config, ConfigError
from .evaluation import evaluate_surrogates
from .fields import GridSpec, ScalarGrid, export_csv, export_pgm, rasterize_sdf, read_grid, write_grid
from .geometry import (
    RI_BOUNDS,
    BlankDesign,
    ReferenceGeometry,
    RegionChoices,
    build_contour,
    build_reference,
    design_from_config,
)
from .oracle import OracleConfig, maxima, simulate
from .optimizer import OptimizerConfig, optimise, select_start_latent
from .sampling import SamplingPlan, generate_splits

MANIFEST_FIELDS = ("id", "split", "bits", "params", "sdf", "seed", "config_hash")
RESULT_FIELDS = ("id", "field", "max_thinning", "max_thickening", "config_hash")


class MissingArtifact(FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"missing artifact: {path}")
        self.path = str(path)


def set_threads() -> None:
    """Honour BLANKOPT_THREADS for torch; defaults to torch's own choice."""
    n = os.environ.get("BLANKOPT_THREADS")
    if n:
        torch.set_num_threads(int(n))


# --------------------------------------------------------------------------
# context
# --------------------------------------------------------------------------

@dataclass
class Context:
    config: Config
    workdir: Path
    ref: ReferenceGeometry = field(init=False)
    spec: GridSpec = field(init=False)

    def __post_init__(self):
        self.workdir = Path(self.workdir)
        self.ref = build_reference(self.config)
        self.spec = grid_spec(self.config, self.ref)

    @property
    def hash(self) -> str:
        return self.config.hash()

    def path(self, *parts) -> Path:
        return self.workdir.joinpath(*parts)

    def need(self, *parts) -> Path:
        p = self.path(*parts)
        if not p.exists():
            raise MissingArtifact(p)
        return p

    def out(self, *parts) -> Path:
        p = self.path(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def grid_spec(config: Config, ref: ReferenceGeometry) -> GridSpec:
    return GridSpec.around(ref.bbox, config.get_int("grid", "height"), config.get_int("grid", "width"),
                           config.get_float("grid", "margin"))


PAPER_SCALE = {
    "grid": {"height": 610, "width": 1120},
    "sampling": {"n_train": 256, "n_test": 64, "n_extra": 1024},
    "autodecoder": {"channels": "128, 64, 32, 16", "epochs": 2000, "batch_size": 16, "lr": 4e-4,
                    "infer_steps": 1000},
    "iaism": {"channels": "16, 32, 64, 128, 128, 128", "epochs": 2000, "augmented_epochs": 2000},
    "optimizer": {"epochs": 2000, "lr": 2.0},
}


def paper_scale(config: Config) -> Config:
    """Copy of ``config`` with the full-size grid, dataset sizes and epochs."""
    out = Config.from_text(config.dumps())
    for section, values in PAPER_SCALE.items():
        for key, value in values.items():
            out.set(section, key, value)
    return out


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------

@dataclass
class Record:
    id: str
    split: str
    bits: str
    params: dict[str, float]
    sdf: str
    seed: int
    config_hash: str
    field: str = ""
    max_thinning: float | None = None
    max_thickening: float | None = None

    def design(self) -> BlankDesign:
        return BlankDesign(RegionChoices.from_bits(self.bits), dict(self.params))


def _fmt_params(params: dict[str, float]) -> str:
    return ";".join(f"{k}={float(v)!r}" for k, v in sorted(params.items(), key=lambda kv: int(kv[0][1:])))


def _parse_params(text: str) -> dict[str, float]:
    out = {}
    for item in filter(None, text.split(";")):
        k, v = item.split("=")
        out[k] = float(v)
    return out


def write_manifest(path: Path, records: Sequence[Record]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in records:
            w.writerow([r.id, r.split, r.bits, _fmt_params(r.params), r.sdf, r.seed, r.config_hash])


def read_manifest(ctx: Context) -> list[Record]:
    path = ctx.need("manifest.tsv")
    records = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh, delimiter="\t")
        for row in rows:
            records.append(Record(row["id"], row["split"], row["bits"], _parse_params(row["params"]),
                                  row["sdf"], int(row["seed"]), row["config_hash"]))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ConfigError("manifest ids are not unique")
    results = ctx.path("results.tsv")
    if results.exists():
        by_id = {r.id: r for r in records}
        with open(results, newline="") as fh:
            for row in csv.DictReader(fh, delimiter="\t"):
                r = by_id[row["id"]]
                r.field = row["field"]
                r.max_thinning = float(row["max_thinning"])
                r.max_thickening = float(row["max_thickening"])
    return records


def split(records: Sequence[Record], name: str) -> list[Record]:
    return [r for r in records if r.split == name]


def load_sdf(ctx: Context, record: Record) -> ScalarGrid:
    return read_grid(ctx.need(record.sdf))


def load_field(ctx: Context, record: Record) -> ScalarGrid:
    if not record.field:
        raise MissingArtifact(ctx.path("results.tsv"))
    return read_grid(ctx.need(record.field))


def require_results(ctx: Context, records: Sequence[Record]) -> None:
    if any(r.max_thinning is None for r in records):
        raise MissingArtifact(ctx.path("results.tsv"))


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def stage_sample(ctx: Context, plan: SamplingPlan | None = None) -> list[Record]:
    plan = plan or SamplingPlan.from_config(ctx.config)
    train, test, extra = generate_splits(plan, ctx.ref)
    records = []
    for name, seed, designs in (("train", plan.seed_train, train), ("test", plan.seed_test, test),
                                ("decoder-extra", plan.seed_extra, extra)):
        for i, design in enumerate(designs):
            rid = f"{name}-{i:04d}"
            sdf = rasterize_sdf(build_contour(design, ctx.ref), ctx.spec)
            rel = f"grids/sdf_{rid}.fgrd"
            write_grid(sdf, ctx.out(rel))
            records.append(Record(rid, name, design.choices.bits, dict(design.params), rel, seed, ctx.hash))
    write_manifest(ctx.out("manifest.tsv"), records)
    return records


def stage_simulate(ctx: Context) -> list[Record]:
    records = read_manifest(ctx)
    oracle = OracleConfig.from_config(ctx.config)
    with open(ctx.out("results.tsv"), "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in records:
            res = simulate(load_sdf(ctx, r), oracle)
            rel = f"grids/field_{r.id}.fgrd"
            write_grid(res.field, ctx.out(rel))
            r.field, r.max_thinning, r.max_thickening = rel, res.max_thinning, res.max_thickening
            w.writerow([r.id, rel, repr(res.max_thinning), repr(res.max_thickening), ctx.hash])
    return records


def _write_latents(ctx: Context, name: str, ids: Sequence[str], z: np.ndarray) -> None:
    np.save(ctx.out("models", f"latents_{name}.npy"), z.astype(np.float32))
    ctx.out("models", f"latents_{name}.ids").write_text("\n".join(ids) + "\n")


def read_latents(ctx: Context, name: str) -> tuple[list[str], np.ndarray]:
    z = np.load(ctx.need("models", f"latents_{name}.npy"))
    ids = ctx.need("models", f"latents_{name}.ids").read_text().split()
    return ids, z


def stage_train_autodecoder(ctx: Context, log=None) -> ad.DecoderRun:
    records = read_manifest(ctx)
    shapes = split(records, "train") + split(records, "decoder-extra")
    cfg = ad.DecoderConfig.from_config(ctx.config)
    run = ad.train_autodecoder([load_sdf(ctx, r) for r in shapes], cfg, log=log)
    ad.save_decoder(ctx.out("models", "autodecoder.nnck"), run.model, cfg, {"config_hash": ctx.hash})
    iaism.write_history(ctx.out("models", "autodecoder_loss.csv"), run.history)
    _write_latents(ctx, "train", [r.id for r in shapes], run.latents)
    return run


def load_decoder(ctx: Context):
    return ad.load_decoder(ctx.need("models", "autodecoder.nnck"))


def stage_infer_latents(ctx: Context) -> np.ndarray:
    records = read_manifest(ctx)
    model, cfg, _ = load_decoder(ctx)
    test = split(records, "test")
    seed = ctx.config.get_int("autodecoder", "infer_seed", 0)
    z, hist = ad.infer_latents(model, [load_sdf(ctx, r) for r in test], cfg, seed=seed)
    _write_latents(ctx, "test", [r.id for r in test], z)
    return z


def _targets(records: Sequence[Record]) -> np.ndarray:
    return np.array([[r.max_thinning, r.max_thickening] for r in records], float)


def stage_train_saism(ctx: Context) -> dict:
    records = read_manifest(ctx)
    by_id = {r.id: r for r in records}
    ids, z = read_latents(ctx, "train")
    rows = [i for i, rid in enumerate(ids) if by_id[rid].split == "train"]
    train = [by_id[ids[i]] for i in rows]
    require_results(ctx, train)
    X, Y = z[rows].astype(np.float64), _targets(train)
    n_starts = ctx.config.get_int("saism", "n_starts", 4)
    seed = ctx.config.get_int("saism", "seed", 0)
    nugget = ctx.config.get_float("saism", "nugget", 1e-10)
    meta = {"config_hash": ctx.hash}
    models = {}
    for col, name in ((0, "thin"), (1, "thick")):
        models[f"rbf_{name}"] = saism.rbf_fit(X, Y[:, col])
        models[f"kriging_{name}"] = saism.kriging_fit(X, Y[:, col], nugget=nugget, n_starts=n_starts, seed=seed)
    for key, model in models.items():
        saism.save_model(ctx.out("models", f"{key}.ssmf"), model, meta)
    return models


def stage_train_iaism(ctx: Context, variants: Sequence[str] | None = None, log=None) -> dict:
    records = read_manifest(ctx)
    train = split(records, "train")
    require_results(ctx, train)
    pairs = [(load_sdf(ctx, r), load_field(ctx, r)) for r in train]
    cfg = iaism.IaismConfig.from_config(ctx.config)
    if variants is None:
        variants = [v.strip() for v in ctx.config.get_str("iaism", "variants", "plain").split(",") if v.strip()]
    runs = {}
    for variant in variants:
        augment = variant == "augmented"
        epochs = ctx.config.get_int("iaism", "augmented_epochs", cfg.epochs) if augment else cfg.epochs
        run = iaism.train_iaism(pairs, cfg, augment=augment, epochs=epochs,
                                log=None if log is None else (lambda e, v, n=variant: log(n, e, v)))
        iaism.save_network(ctx.out("models", f"iaism_{variant}.nnck"), run.net, cfg,
                           {"config_hash": ctx.hash, "augment": augment, "epochs": epochs})
        iaism.write_history(ctx.out("models", f"iaism_{variant}_loss.csv"), run.history)
        runs[variant] = run
    return runs


MODEL_ROWS = (
    ("RBF (thinning)", "rbf_thin", "thin"),
    ("RBF (thickening)", "rbf_thick", "thick"),
    ("Kriging (thinning)", "kriging_thin", "thin"),
    ("Kriging (thickening)", "kriging_thick", "thick"),
)


def stage_evaluate(ctx: Context):
    records = read_manifest(ctx)
    by_id = {r.id: r for r in records}
    ids, z = read_latents(ctx, "test")
    test = [by_id[i] for i in ids]
    require_results(ctx, test)
    gt = [(r.max_thinning, r.max_thickening) for r in test]
    preds: dict = {}
    for label, key, which in MODEL_ROWS:
        model = saism.load_model(ctx.need("models", f"{key}.ssmf"))
        p = list(np.atleast_1d(model(z.astype(np.float64))))
        preds[label] = (p, None) if which == "thin" else (None, p)
    sdfs = [load_sdf(ctx, r) for r in test]
    for variant, label in (("plain", "IAISM"), ("augmented", "IAISM + augmentation")):
        path = ctx.path("models", f"iaism_{variant}.nnck")
        if not path.exists():
            continue
        net, _, _ = iaism.load_network(path)
        fields = iaism.predict_many(net, sdfs)
        m = [maxima(f) for f in fields]
        preds[label] = ([a for a, _ in m], [b for _, b in m])
    if "IAISM" not in preds:
        raise MissingArtifact(ctx.path("models", "iaism_plain.nnck"))
    report = evaluate_surrogates(gt, preds, split="test")
    report.write_csv(ctx.out("reports", "evaluation.csv"))
    text = report.text() + f"\nconfig {ctx.hash}\n"
    ctx.out("reports", "evaluation.txt").write_text(text)
    return report


def line_box(ctx: Context, ref_grad, margin: int = 5, n_offsets: int = 13, tol: float = 1e-6):
    """Line-regulariser box derived from the reference geometry.

    Rows bound the region-1 edge over its whole offset range, dilated by
    ``margin`` pixels.  Columns are the widest run around the edge midpoint
    in which the exact SDF gradient equals ``ref_grad`` at every sampled
    offset, i.e. where the edge is the nearest outline feature.
    """
    spec, ref = ctx.spec, ctx.ref
    lo, hi = RI_BOUNDS["P0"]
    ends = np.array([p for p0 in (lo, hi) for p in ref.region1_edge(p0)])
    rows = (ends[:, 1] - spec.origin[1]) / spec.spacing - 0.5
    cols = (ends[:, 0] - spec.origin[0]) / spec.spacing - 0.5
    r0, r1 = int(np.floor(rows.min())) - margin, int(np.ceil(rows.max())) + margin
    if r0 < 1 or r1 > spec.height - 2:
        raise ConfigError("region-1 edge lies too close to the grid border for a line box")
    base = design_from_config(ctx.config, "reference_design")
    worst = np.zeros(spec.width)
    for p0 in np.linspace(lo, hi, n_offsets):
        design = BlankDesign(base.choices, {**base.params, "P0": float(p0)})
        s = rasterize_sdf(build_contour(design, ref), spec).values
        gx = (s[r0:r1 + 1, 2:] - s[r0:r1 + 1, :-2]) / (2 * spec.spacing)
        gy = (s[r0 + 1:r1 + 2, 1:-1] - s[r0 - 1:r1, 1:-1]) / (2 * spec.spacing)
        dev = (gx - ref_grad[0]) ** 2 + (gy - ref_grad[1]) ** 2
        worst[1:-1] = np.maximum(worst[1:-1], dev.max(axis=0))
    worst[[0, -1]] = np.inf
    mid = int(round(cols.mean()))
    if worst[mid] > tol:
        raise ConfigError("no straight region-1 span at the edge midpoint")
    c0 = c1 = mid
    while worst[c0 - 1] <= tol:
        c0 -= 1
    while worst[c1 + 1] <= tol:
        c1 += 1
    return r0, r1, c0, c1


def optimiser_config(ctx: Context) -> OptimizerConfig:
    cfg = OptimizerConfig.from_config(ctx.config)
    if cfg.box is None:
        cfg = replace(cfg, box=line_box(ctx, cfg.ref_grad))
    return cfg


def optimisation_seeds(config: Config) -> list[int]:
    return config.get_ints("optimizer", "seeds") if config.has("optimizer", "seeds") else [0]


def stage_optimize(ctx: Context, seeds: Sequence[int] | None = None):
    records = read_manifest(ctx)
    by_id = {r.id: r for r in records}
    net_path = ctx.need("models", "iaism_plain.nnck")
    model, _, _ = load_decoder(ctx)
    net, _, _ = iaism.load_network(net_path)
    ids, z = read_latents(ctx, "train")
    train = [by_id[i] for i in ids]
    require_results(ctx, train)
    start_idx, start = select_start_latent(z, [r.max_thickening for r in train])
    cfg = optimiser_config(ctx)
    oracle = OracleConfig.from_config(ctx.config)
    traces = {}
    summary = [["seed", "start_id", "initial_loss", "final_loss", "passed", "max_thinning", "max_thickening",
                "config_hash"]]
    for seed in (seeds if seeds is not None else optimisation_seeds(ctx.config)):
        trace = optimise(start, model, net, cfg, seed=seed, oracle=oracle)
        trace.write_csv(ctx.out("reports", f"trace_seed{seed}.csv"))
        v = trace.validation
        if v is not None and v.contour is not None:
            np.savetxt(ctx.out("reports", f"contour_seed{seed}.csv"), v.contour, delimiter=",",
                       header="x_mm,y_mm", comments="")
            write_grid(rasterize_sdf(v.contour, ctx.spec), ctx.out("reports", f"sdf_seed{seed}.fgrd"))
        res = v.result if v else None
        summary.append([seed, train[start_idx].id, repr(trace.loss[0]), repr(trace.loss[-1]),
                        int(bool(v and v.passed)),
                        "" if res is None else repr(res.max_thinning),
                        "" if res is None else repr(res.max_thickening), ctx.hash])
        traces[seed] = trace
    with open(ctx.out("reports", "optimization.csv"), "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(summary)
    return traces


def stage_export(ctx: Context, grid_path: str, fmt: str, out: str | None = None) -> Path:
    src = Path(grid_path)
    if not src.is_absolute() and not src.exists():
        src = ctx.path(grid_path)
    if not src.exists():
        raise MissingArtifact(src)
    grid = read_grid(src)
    dst = Path(out) if out else src.with_suffix("." + fmt)
    if fmt == "csv":
        export_csv(grid, dst)
    elif fmt == "pgm":
        export_pgm(grid, dst)
    else:
        raise ConfigError(f"unknown export format {fmt!r}")
    return dst
