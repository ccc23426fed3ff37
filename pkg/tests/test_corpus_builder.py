import json
import logging
from datetime import date

import pytest

from conftest import TableEmbedder, make_doc
from eventeval.corpus_builder import (
    LLMTemporalAnnotator,
    PipelineConfig,
    Rejection,
    RuleTemporalAnnotator,
    annotate_temporal,
    assemble_instance,
    build_corpus,
    clean_documents,
    filter_by_relevance,
    load_pipeline_config,
    score_documents,
    split_instances,
)
from eventeval.data_model import Document, TemporalRelation, load_corpus, validate_instance
from eventeval.embeddings import HashingEmbedder
from eventeval.errors import AnnotatorFailure, ConfigError, MissingSimilarityScores, ProviderFailure

from conftest import make_instance

REFERENCE = "2023年7月29日，河北遭遇强降雨。随后，涿州多地被淹。"


def doc(body, i=0, **kw):
    return Document(doc_id=f"d{i}", body=body, **kw)


# ------------------------------------------------------------------ cleaning

def test_clean_collapses_whitespace_and_drops_empty():
    out = clean_documents([doc("  正文  正文", 0), doc("", 1)])
    assert [d.body for d in out] == ["正文 正文"]


def test_dedup_keeps_earliest():
    out = clean_documents([doc("同一篇报道", 0, publish_time="2023-01-03"),
                           doc("同一篇报道", 1, publish_time="2023-01-01")])
    assert len(out) == 1 and out[0].publish_time == date(2023, 1, 1) and out[0].doc_id == "d1"


def test_dedup_keeps_first_position():
    out = clean_documents([doc("甲", 0), doc("乙", 1), doc("甲", 2, publish_time="2023-01-01")])
    assert [d.body for d in out] == ["甲", "乙"]


@pytest.mark.parametrize("body", [
    "<div class='nav'></div>",
    "<!-- ad slot --><br/>",
    "&nbsp;&nbsp;",
    "<script>var a = 1;</script>",
    "【纠错】 【打印】",
    "责任编辑：张三",
    "点击关注 分享到：微信",
])
def test_markup_remnants_removed(body):
    assert clean_documents([doc(body)]) == []


def test_cleaning_keeps_content_around_markup():
    out = clean_documents([doc("<p>暴雨来袭</p>\n责任编辑：李四")])
    assert out[0].body == "暴雨来袭"


# ----------------------------------------------------------------- relevance

def test_identical_body_kept_with_real_embedder():
    docs = [doc(REFERENCE, 0), doc("股市今日小幅上涨，成交量放大。", 1)]
    kept = filter_by_relevance(docs, REFERENCE, HashingEmbedder(), PipelineConfig())
    assert [d.doc_id for d in kept] == ["d0"]


def test_threshold_boundary_inclusive():
    provider = TableEmbedder({"A": 0.49, "B": 0.50})
    kept = filter_by_relevance([doc("A", 0), doc("B", 1)], REFERENCE, provider, PipelineConfig())
    assert [d.body for d in kept] == ["B"]


def test_provider_failure():
    with pytest.raises(ProviderFailure):
        filter_by_relevance([doc("A")], REFERENCE, TableEmbedder({}, fail=True), PipelineConfig())


def test_thirty_docs_exact_subset():
    values = [round(0.1 * (1 + i % 9), 1) for i in range(30)]
    bodies = [f"文档{i}" for i in range(30)]
    provider = TableEmbedder(dict(zip(bodies, values)))
    docs = [doc(b, i) for i, b in enumerate(bodies)]
    kept = filter_by_relevance(docs, REFERENCE, provider, PipelineConfig())
    assert [d.doc_id for d in kept] == [f"d{i}" for i, v in enumerate(values) if v >= 0.5]


# ------------------------------------------------------------------ assembly

def test_too_few_rejected():
    assert assemble_instance("t", [make_doc(i) for i in range(4)], REFERENCE, PipelineConfig()) == \
        Rejection("too_few_documents", 4)


def test_in_range_passthrough():
    docs = [make_doc(i) for i in range(12)]
    inst = assemble_instance("t", docs, REFERENCE, PipelineConfig())
    assert list(inst.documents) == docs and inst.temporal == ()
    validate_instance(inst)


def test_truncates_to_top_twenty():
    docs = [make_doc(i) for i in range(25)]
    scores = {d.doc_id: (i * 7 % 25) / 25 for i, d in enumerate(docs)}
    inst = assemble_instance("t", docs, REFERENCE, PipelineConfig(), scores)
    top = set(sorted(scores, key=scores.get, reverse=True)[:20])
    assert [d.doc_id for d in inst.documents] == [d.doc_id for d in docs if d.doc_id in top]


def test_truncation_needs_scores():
    with pytest.raises(MissingSimilarityScores):
        assemble_instance("t", [make_doc(i) for i in range(21)], REFERENCE, PipelineConfig())


def test_instance_id_stable():
    docs = [make_doc(i) for i in range(5)]
    a = assemble_instance("河北暴雨", docs, REFERENCE, PipelineConfig())
    b = assemble_instance("河北暴雨", docs, REFERENCE, PipelineConfig())
    assert a.instance_id == b.instance_id and a.instance_id.startswith("evt-")


# ------------------------------------------------------------------ temporal

class StubAnnotator:
    def __init__(self, relations):
        self.relations = relations

    def annotate(self, summary):
        return list(self.relations)


S1, S2 = "2023年7月29日，河北遭遇强降雨", "随后，涿州多地被淹"


def test_after_stored_as_before():
    inst = annotate_temporal(make_instance(reference=REFERENCE),
                             StubAnnotator([TemporalRelation.from_pair(S2, S1, "after")]))
    assert inst.temporal == (TemporalRelation(earlier=S1, later=S2),)


def test_duplicate_pair_stored_once():
    rel = TemporalRelation(earlier=S1, later=S2)
    inst = annotate_temporal(make_instance(reference=REFERENCE), StubAnnotator([rel, rel]))
    assert inst.temporal == (rel,)


def test_ungrounded_pair_dropped(caplog):
    rel = TemporalRelation(earlier=S1, later="救援队抵达")
    with caplog.at_level(logging.INFO, logger="eventeval.corpus_builder"):
        inst = annotate_temporal(make_instance(reference=REFERENCE), StubAnnotator([rel]))
    assert inst.temporal == ()
    assert "dropped 1 ungrounded" in caplog.text


def test_annotator_failure():
    class Broken:
        def annotate(self, summary):
            raise TimeoutError("slow")

    with pytest.raises(AnnotatorFailure):
        annotate_temporal(make_instance(reference=REFERENCE), Broken())


def test_rule_annotator_markers_and_dates():
    rels = RuleTemporalAnnotator().annotate(REFERENCE)
    assert rels == [TemporalRelation(earlier="2023年7月29日，河北遭遇强降雨。", later="随后，涿州多地被淹。")]
    dated = "2023年7月29日，暴雨开始。7月31日，雨势减弱。"
    assert len(RuleTemporalAnnotator().annotate(dated)) == 1


def test_llm_annotator_parses_reply():
    class Backend:
        name = "stub"
        context_limit = None

        def generate(self, prompt, params):
            return f"{S2} ||| after ||| {S1}\n无关内容\nx ||| during ||| y"

    inst = annotate_temporal(make_instance(reference=REFERENCE), LLMTemporalAnnotator(Backend()))
    assert inst.temporal == (TemporalRelation(earlier=S1, later=S2),)


# -------------------------------------------------------------------- config

def test_config_defaults():
    cfg = PipelineConfig()
    assert (cfg.similarity_threshold, cfg.min_docs, cfg.max_docs) == (0.5, 5, 20)


def test_config_file_and_errors(tmp_path):
    path = tmp_path / "pipeline.cfg"
    path.write_text("similarity_threshold = 0.6\nmax_docs = 15\n", encoding="utf-8")
    assert load_pipeline_config(path).max_docs == 15
    path.write_text("min_docs = 10\nmax_docs = 5\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)
    path.write_text('{"similarity_threshold": 2}', encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


# --------------------------------------------------------------- end to end

def test_build_corpus_from_raw(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    relevant = [f"{REFERENCE}第{i}次报道。" for i in range(6)]
    entries = [
        {"title": "河北暴雨", "card": {"time": "2023年7月29日", "location": "河北"},
         "description": REFERENCE,
         "references": [{"url": "https://news.example.cn/a", "text": relevant[0]}],
         "retrieved": [{"body": b, "publish_time": "2023-07-30"} for b in relevant[1:]]
         + [{"body": "无关的体育新闻，球队获胜。", "publish_time": "2023-07-30"},
            {"body": relevant[1] + "旧闻", "publish_time": "2021-01-01"}]},
        {"title": "某人物", "card": {"出生": "1990年"}, "description": "人物简介"},
        {"title": "小事件", "card": {"time": "2023-01-01", "location": "北京"}, "description": REFERENCE,
         "retrieved": [{"body": REFERENCE}]},
    ]
    (raw / "part-0.jsonl").write_text(
        "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in entries), encoding="utf-8")
    out = tmp_path / "corpus"
    summary = build_corpus(raw, out, PipelineConfig(test_fraction=1.0, dev_fraction=0.0), HashingEmbedder(),
                           RuleTemporalAnnotator())
    assert summary.entries == 3 and summary.non_event == 1
    assert summary.rejected == {"too_few_documents": 1}
    (inst,) = load_corpus(out, "test")
    assert len(inst.documents) == 6
    assert inst.event_date == date(2023, 7, 29)
    assert len(inst.temporal) == 1
    assert json.loads((out / "build_summary.json").read_text())["split_sizes"] == {"train": 0, "dev": 0, "test": 1}


def test_split_sizes_follow_fractions():
    insts = [make_instance(5, instance_id=f"e{i}") for i in range(5100)]
    splits = split_instances(insts, PipelineConfig())
    assert {k: len(v) for k, v in splits.items()} == {"train": 4015, "dev": 500, "test": 585}
    again = split_instances(insts, PipelineConfig())
    assert [i.instance_id for i in again["test"]] == [i.instance_id for i in splits["test"]]


def test_score_documents_keys():
    scores = score_documents([doc("A", 0), doc("B", 1)], REFERENCE, TableEmbedder({"A": 0.3, "B": 0.7}))
    assert scores == {"d0": 0.3, "d1": 0.7}
