from __future__ import annotations

import json
from fractions import Fraction

import pytest

from asapf.bench import bench
from asapf.scenario import bundled_suite_dir


@pytest.fixture(scope="module")
def single():
    return bench(bundled_suite_dir(), repeats=1)


def test_suite_expansion_ratio(single):
    assert not single.errors
    assert len(single.summaries) == 10
    for s in single.summaries:
        assert s.expansions == {"average": 484, "adaptive": 100}
        assert s.expansion_ratio == Fraction(25, 121)
        assert s.deterministic


def test_repeat_count_does_not_change_counts(single):
    three = bench(bundled_suite_dir(), repeats=3)
    for a, b in zip(single.summaries, three.summaries):
        assert a.scenario_id == b.scenario_id
        assert a.expansions == b.expansions
        assert a.dp_cost == b.dp_cost
    assert len(three.records) == 3 * 2 * 10


def test_records_are_positive(single):
    for r in single.records:
        assert r.dp_elapsed > 0 and r.qp_elapsed > 0 and r.cycle_elapsed > 0


def test_summary_and_files(single, tmp_path):
    single.write(tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["expansion_ratios"] == ["25/121"]
    assert summary["max_cost_rel_diff"] <= 0.05
    assert [r["scenario_id"] for r in summary["per_scenario"]] == sorted(r["scenario_id"] for r in summary["per_scenario"])
    assert len((tmp_path / "bench_records.csv").read_text().splitlines()) == 1 + 20
    assert len((tmp_path / "bench.csv").read_text().splitlines()) == 11


def test_repeats_validated():
    with pytest.raises(ValueError):
        bench(bundled_suite_dir(), repeats=0)
