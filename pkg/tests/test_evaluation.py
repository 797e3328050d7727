import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blankopt.evaluation import (
    MetricError,
    aape,
    evaluate_surrogates,
    mpae,
    reconstruction_stats,
    rmt,
    score,
    sig,
)
from blankopt.fields import GridError, GridSpec, ScalarGrid

SPEC = GridSpec(8, 8)


def test_pixel_errors_by_hand():
    gt = ScalarGrid(SPEC, np.zeros((8, 8)))
    v = np.zeros((8, 8))
    v[0, 0], v[3, 4] = 4.0, -2.0
    pd = ScalarGrid(SPEC, v)
    assert mpae(gt, pd) == 4.0
    assert aape(gt, pd) == pytest.approx(6.0 / 64)


def test_pixel_errors_need_same_grid():
    with pytest.raises(GridError):
        mpae(ScalarGrid(SPEC, np.zeros((8, 8))), ScalarGrid(GridSpec(8, 9), np.zeros((8, 9))))


@given(st.lists(st.floats(-50, 50), min_size=64, max_size=64), st.lists(st.floats(-50, 50), min_size=64, max_size=64))
def test_aape_never_exceeds_mpae(a, b):
    ga = ScalarGrid(SPEC, np.reshape(a, (8, 8)))
    gb = ScalarGrid(SPEC, np.reshape(b, (8, 8)))
    assert 0.0 <= aape(ga, gb) <= mpae(ga, gb) + 1e-9
    assert mpae(ga, gb) == mpae(gb, ga)


def test_rmt_by_hand():
    assert rmt(0.2, 0.15) == pytest.approx(0.25)
    assert rmt(-0.1, -0.12) == pytest.approx(0.2)
    with pytest.raises(MetricError, match="undefined relative error"):
        rmt(0.0, 0.1)


def test_score_averages():
    gt = [(0.2, 0.1), (0.1, 0.05)]
    s = score("m", gt, [0.1, 0.1], [0.1, 0.06])
    assert s.rmt == pytest.approx([0.5, 0.0])
    assert s.armt == pytest.approx(0.25)
    assert s.armtk == pytest.approx((0.0 + 0.2) / 2)


def test_single_indicator_models_leave_gaps(tmp_path):
    gt = [(0.2, 0.1)]
    report = evaluate_surrogates(gt, {"rbf": ([0.22], None), "iaism": ([0.2], [0.1])})
    assert report.row("rbf").armtk is None
    assert report.table()[1] == ["rbf", "10.00%", "-"]
    assert report.table()[2] == ["iaism", "0.00%", "0.00%"]
    report.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert (rows[0]["model"], rows[0]["split"], rows[0]["armtk"]) == ("rbf", "test", "")
    assert float(rows[0]["armt"]) == pytest.approx(0.1)
    assert "split: test" in report.text()
    with pytest.raises(KeyError):
        report.row("kriging")


def test_length_mismatch_is_an_error():
    with pytest.raises(ValueError):
        score("m", [(0.2, 0.1)], [0.1, 0.2])


def test_reconstruction_stats():
    gts = [ScalarGrid(SPEC, np.zeros((8, 8))) for _ in range(2)]
    pds = [ScalarGrid(SPEC, np.full((8, 8), 1.0)), ScalarGrid(SPEC, np.full((8, 8), 3.0))]
    st_ = reconstruction_stats(gts, pds).summary
    assert st_ == {"mean_mpae": 2.0, "max_mpae": 3.0, "mean_aape": 2.0, "max_aape": 3.0}


def test_sig():
    assert sig(0.123456789) == "1.23457e-01"
    assert sig(0.0) == "0.0"
    assert sig(float("nan")) == "nan"
