import json
import math
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from eventeval.analysis import (
    Bucketing,
    ConsistencyInput,
    ScoreRecord,
    aggregate_report,
    align_verdicts,
    bucket_metrics,
    consistency,
    corpus_stats,
    render_table,
    time_span,
    write_plot_data,
)
from eventeval.errors import DuplicateScoreRecord, EmptyInput, LengthMismatch


def score(instance_id, system="sys", shots=0, **kw):
    base = dict(r1=0.5, r2=0.5, rl=0.5, semantic_f1=0.5)
    base.update(kw)
    return ScoreRecord(instance_id=instance_id, system_id=system, shots=shots, **base)


def test_mean_of_two():
    (row,) = aggregate_report([score("a", r1=0.40), score("b", r1=0.50)])
    assert row.r1 == pytest.approx(45.0)
    assert row.n_instances == 2


def test_table_row_rendered_exactly():
    rec = score("a", r1=0.475, r2=0.261, rl=0.331, semantic_f1=0.762, er=0.217, ar=0.462, cr=0.561, tr=0.400,
                system="GPT-4o")
    table = render_table(aggregate_report([rec]))
    assert table.splitlines() == [
        "Model\tShots\tN\tR-1\tR-2\tR-L\tBS\tER\tAR\tCR\tTR",
        "GPT-4o\t0\t1\t47.5\t26.1\t33.1\t76.2\t21.7\t46.2\t56.1\t40.0",
    ]


def test_absent_recall_excluded_from_denominator_only():
    (row,) = aggregate_report([score("a", cr=0.5, er=1.0), score("b", cr=None, er=0.0)])
    assert row.cr == 50.0 and row.er == 50.0


def test_all_absent_renders_dash():
    table = render_table(aggregate_report([score("a")]))
    assert table.splitlines()[1].endswith("50.0\t-\t-\t-\t-")


def test_duplicate_score_record():
    with pytest.raises(DuplicateScoreRecord):
        aggregate_report([score("a"), score("a")])


def test_rows_sorted_by_system_then_shots():
    rows = aggregate_report([score("a", system="b", shots=1), score("a", system="b"), score("a", system="a")])
    assert [(r.system_id, r.shots) for r in rows] == [("a", 0), ("b", 0), ("b", 1)]


# ------------------------------------------------------------------ buckets

def test_doc_count_bucket():
    b = Bucketing.default("doc_count")
    assert b.assign(9) == "(8,12]"
    assert b.assign(5) == "[5,8]" and b.assign(20) == "(16,20]"
    assert b.assign(21) == "other" and b.assign(None) == "other"


def test_time_span_bucket():
    b = Bucketing.default("time_span")
    assert b.assign(40) == "over one month"
    assert b.assign(0) == "within one day" and b.assign(1) == "within one day"
    assert b.assign(7) == "one day to one week"


def test_bucketing_validation():
    with pytest.raises(ValueError):
        Bucketing(dimension="doc_count", edges=(5, 5, 8))
    with pytest.raises(ValueError):
        Bucketing(dimension="doc_count", edges=(5, 8), labels=("a", "b"))


def test_one_bucket_holds_everything():
    insts = [make_instance(6, instance_id=f"e{i}") for i in range(3)]
    report = bucket_metrics([score(i.instance_id) for i in insts], insts, Bucketing.default("doc_count"))
    sizes = {b.label: b.size for b in report.buckets}
    assert sizes == {"[5,8]": 3, "(8,12]": 0, "(12,16]": 0, "(16,20]": 0}
    assert [len(b.rows) for b in report.buckets] == [1, 0, 0, 0]
    data = report.plot_data()
    assert data["series"]["sys|0shot"]["r1"] == [50.0, None, None, None]


def test_plot_data_written(tmp_path):
    insts = [make_instance(6)]
    report = bucket_metrics([score("evt-1")], insts, Bucketing.default("time_span"))
    write_plot_data(report, tmp_path / "by_time_span.json")
    data = json.loads((tmp_path / "by_time_span.json").read_text(encoding="utf-8"))
    assert data["labels"][-1] == "other" and data["sizes"][-1] == 1
    assert data["definition"].startswith("days between")


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(1, 25), min_size=1, max_size=15))
def test_buckets_partition_corpus(counts):
    insts = [make_instance(n, instance_id=f"e{i}") for i, n in enumerate(counts)]
    for dim in ("doc_count", "time_span"):
        report = bucket_metrics([], insts, Bucketing.default(dim))
        assert sum(b.size for b in report.buckets) == len(insts)


# ---------------------------------------------------------------- time span

def test_time_span_two_dates():
    inst = make_instance(reference="2023年7月29日暴雨来袭，2023年8月1日雨停。")
    assert time_span(inst) == 3


def test_time_span_single_and_none():
    assert time_span(make_instance(reference="2023年7月29日暴雨来袭。")) == 0
    assert time_span(make_instance(reference="暴雨来袭。")) is None


def test_time_span_month_day_uses_context():
    inst = make_instance(reference="2023年7月29日暴雨来袭。8月10日，救援结束。")
    assert time_span(inst) == 12
    inst = make_instance(reference="7月29日暴雨来袭，次日雨停。", event_date=date(2023, 7, 29))
    assert time_span(inst) == 1


# -------------------------------------------------------------- consistency

def test_consistency_identity():
    v = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1]
    assert consistency(ConsistencyInput(predicted=v, human=v)) == 100.0


def test_consistency_one_flip_in_twenty():
    human = [1, 1, 0, 1, 0] * 4
    predicted = list(human)
    predicted[7] = 1 - predicted[7]
    assert consistency(predicted, human) == 95.0


def test_consistency_errors():
    with pytest.raises(LengthMismatch):
        consistency([1], [1, 0])
    with pytest.raises(EmptyInput):
        consistency([], [])
    with pytest.raises(ValueError):
        consistency([2], [1])
    with pytest.raises(ValueError):
        ConsistencyInput(predicted=[2], human=[1])


def test_align_verdicts_by_key():
    base = {"instance_id": "a", "system_id": "s", "shots": 0}
    predicted = [dict(base, kind="event", index=0, verdict=1), dict(base, kind="event", index=1, verdict=0),
                 dict(base, kind="argument", index=0, verdict=1)]
    human = [dict(base, kind="event", index=1, verdict=1), dict(base, kind="event", index=0, verdict=1)]
    aligned = align_verdicts(predicted, human)
    assert list(aligned) == ["event"]
    assert consistency(aligned["event"]) == 50.0


# -------------------------------------------------------------------- stats

def test_corpus_stats():
    insts = [make_instance(5, reference="甲" * 100), make_instance(7, reference="乙" * 200, instance_id="e2")]
    stats = corpus_stats(insts)
    body_chars = sum(len(d.body) for i in insts for d in i.documents) / 2
    assert stats == {"instances": 2, "mean_docs": 6.0, "mean_input_chars": body_chars, "mean_reference_chars": 150.0}
    assert corpus_stats([])["instances"] == 0


def test_inf_edge_label():
    b = Bucketing(dimension="time_span", edges=(0, 10, math.inf))
    assert b.bucket_labels() == ["[0,10]", "(10,inf]"]
