import numpy as np
import pytest

from gblsdetect.ablation import METRICS, AblationRow, run_ablation
from gblsdetect.text import split

from conftest import TOY_ENCODER, toy_train_config


@pytest.fixture(scope="module")
def small_report(toy_corpus):
    cfg = toy_train_config()
    cfg.epochs = 1
    cfg.gbls.max_epochs = 5
    cache = {}
    parts = split(toy_corpus[:200], (0.6, 0.2, 0.2), seed=1)
    return run_ablation(parts, TOY_ENCODER, cfg, stage1_cache=cache), cache


def test_structure(small_report):
    report, _ = small_report
    kinds = [r.kind for r in report.rows]
    assert kinds == ["config"] * 4 + ["delta"] * 3 + ["selector"] * 3
    assert [r.index for r in report.rows] == list(range(1, 11))
    assert all(r.status == "ok" for r in report.rows)


def test_deltas_are_row_differences(small_report):
    report, _ = small_report
    for name, a, b in (("SE contribution", "+SE", "baseline"), ("FS contribution", "+SE+Sentiment+FS(MI)", "+SE+Sentiment")):
        for m in METRICS:
            assert report.row(name).values[m] == report.row(a).values[m] - report.row(b).values[m]


def test_selector_rows_reuse_configs(small_report):
    report, _ = small_report
    assert report.row("FS: MI").values == report.row("+SE+Sentiment+FS(MI)").values
    assert report.row("FS: none").values == report.row("+SE+Sentiment").values


def test_stage1_is_shared(small_report):
    _, cache = small_report
    # encoder settings differ only in the SE switch, so two fine-tunes cover all five runs
    assert len(cache) == 2


def test_csv_roundtrip_keeps_bits(small_report):
    report, _ = small_report
    lines = report.to_csv().splitlines()
    assert len(lines) == 11
    cells = lines[5].split(",")
    assert float(cells[3]) == report.rows[4].values["accuracy"]


def test_failed_row_marker():
    row = AblationRow(1, "x", "config", {}, "failed [stage1]")
    assert row.csv_line() == "1,x,config,,,,,,failed [stage1]"
