"""Constrained Latin-hypercube sampling of blank designs.

Sampling runs in three steps.  The range-independent block (P0 plus the
small-arc angle of each region) is drawn once over the whole set.  Each
design's range-dependent parameters then get their bounds from the partially
built geometry.  Finally a per-parameterisation LHS in the unit cube is mapped
into those bounds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .config import Config
from .geometry import (
    REGION_PARAMS,
    BlankDesign,
    ReferenceGeometry,
    RegionChoices,
    design_from_unit,
    design_rd_order,
    validate_design,
)

MAX_RETRIES = 1000

# columns of the range-independent block; region angles map to P1/P3 etc.
RI_COLUMNS = ("P0", "angle2", "angle3", "angle4", "angle5")


class SamplingError(RuntimeError):
    pass


def lhs(n: int, d: int, seed) -> np.ndarray:
    """``n`` Latin-hypercube points in ``[0, 1)^d``.

    Each dimension has exactly one point per bin ``[k/n, (k+1)/n)`` and the
    position inside a bin is uniform.
    """
    if n < 1 or d < 1:
        raise ValueError("lhs needs n >= 1 and d >= 1")
    pts = qmc.LatinHypercube(d=d, seed=np.random.default_rng(seed)).random(n)
    # guard the open upper edge against round-up
    return np.minimum(pts, np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class SamplingPlan:
    n_train: int = 64
    n_test: int = 16
    seed_train: int = 7
    seed_test: int = 11
    seed_extra: int = 13
    n_extra: int = 0
    stratify: bool = True

    @classmethod
    def from_config(cls, config: Config, section: str = "sampling") -> "SamplingPlan":
        d = cls()
        return cls(
            n_train=config.get_int(section, "n_train", d.n_train),
            n_test=config.get_int(section, "n_test", d.n_test),
            seed_train=config.get_int(section, "seed_train", d.seed_train),
            seed_test=config.get_int(section, "seed_test", d.seed_test),
            seed_extra=config.get_int(section, "seed_extra", d.seed_extra),
            n_extra=config.get_int(section, "n_extra", d.n_extra),
            stratify=config.get_bool(section, "stratify", d.stratify),
        )


def ri_ids(choices: RegionChoices) -> list[str]:
    """Range-independent ids active under ``choices``, in RI column order."""
    return ["P0"] + [REGION_PARAMS[r][choices.of(r)][0] for r in (2, 3, 4, 5)]


def rd_ids(choices: RegionChoices) -> list[str]:
    return design_rd_order(choices)


def allocate(n: int, stratify: bool = True, seed=0) -> list[RegionChoices]:
    """Parameterisation of each of ``n`` samples.

    Stratified allocation is round robin over the 16 parameterisations, so
    each gets ``n // 16`` samples and the first ``n % 16`` get one extra.
    Without stratification parameterisations are drawn uniformly.
    """
    every = RegionChoices.all()
    if stratify:
        return [every[i % len(every)] for i in range(n)]
    rng = np.random.default_rng(seed)
    return [every[i] for i in rng.integers(0, len(every), size=n)]


def sample_designs(n: int, seed: int, ref: ReferenceGeometry, stratify: bool = True) -> list[BlankDesign]:
    """Draw ``n`` feasible designs.

    The RI block is one LHS over all ``n`` samples.  For each parameterisation
    the RD block is an LHS over that parameterisation's samples.  If any
    mapped design in a stratum comes out infeasible, the stratum's RD block
    is redrawn whole, which keeps the stratification exact.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    choices = allocate(n, stratify, seed)
    ri = lhs(n, len(RI_COLUMNS), [seed, 0])
    designs: list[BlankDesign | None] = [None] * n
    groups: dict[str, list[int]] = {}
    for i, c in enumerate(choices):
        groups.setdefault(c.bits, []).append(i)
    for bits, members in groups.items():
        c = RegionChoices.from_bits(bits)
        ri_names, rd_names = ri_ids(c), rd_ids(c)
        for attempt in range(MAX_RETRIES):
            rd = lhs(len(members), len(rd_names), [seed, 1, int(bits, 2), attempt])
            batch = []
            for row, i in enumerate(members):
                design = design_from_unit(
                    c, ref, dict(zip(ri_names, ri[i])), dict(zip(rd_names, rd[row]))
                )
                if design is None or validate_design(design, ref):
                    break
                batch.append(design)
            else:
                for i, design in zip(members, batch):
                    designs[i] = design
                break
        else:
            raise SamplingError(f"infeasible stratum {bits}: {MAX_RETRIES} draws failed")
    return designs  # type: ignore[return-value]


def generate_splits(plan: SamplingPlan, ref: ReferenceGeometry):
    """Independent train and test draws (plus decoder-extra shapes if asked)."""
    seeds = [plan.seed_train, plan.seed_test] + ([plan.seed_extra] if plan.n_extra else [])
    if len(set(seeds)) != len(seeds):
        raise ValueError("train, test and extra seeds must differ")
    train = sample_designs(plan.n_train, plan.seed_train, ref, plan.stratify)
    test = sample_designs(plan.n_test, plan.seed_test, ref, plan.stratify)
    extra = sample_designs(plan.n_extra, plan.seed_extra, ref, plan.stratify) if plan.n_extra else []
    return train, test, extra
