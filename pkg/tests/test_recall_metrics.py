import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import VerdictStub, make_instance
from eventeval.data_model import Argument, CausalRelation, GeneratedSummary, GlobalAnnotation, TemporalRelation
from eventeval.errors import DiscriminatorFailure, EventEvalError
from eventeval.recall_metrics import (
    HttpDiscriminator,
    KeyElement,
    KeyElementSet,
    containment_oracle,
    evaluate_summary,
    recall_for_kind,
    render_element,
    verdict_records,
)


def events(*sentences):
    return KeyElementSet("event", [KeyElement("event", s) for s in sentences])


def summary(text="暴雨导致29人遇难，救援随即展开。"):
    return GeneratedSummary(instance_id="evt-1", system_id="sys", text=text)


def test_render_event_identity():
    assert render_element(KeyElement("event", "暴雨来袭")) == "暴雨来袭"


def test_render_causal_templates():
    cause = KeyElement("causal", CausalRelation(cause_sentence="暴雨来袭", effect_sentence="道路被淹"))
    assert render_element(cause) == "因为暴雨来袭，所以道路被淹"
    assert cause.rendered == "因为暴雨来袭，所以道路被淹"
    pre = KeyElement("causal", CausalRelation(cause_sentence="堤坝加固", effect_sentence="转移群众",
                                              kind="precondition"))
    assert render_element(pre) == "堤坝加固，在此前提下转移群众"


def test_render_temporal_and_argument():
    assert render_element(KeyElement("temporal", TemporalRelation(earlier="A", later="B"))) == "A。随后，B"
    arg = KeyElement("argument", Argument(text="河北", role="location", corefs=("冀",)))
    assert render_element(arg) == "河北"


def test_payload_type_checked():
    with pytest.raises(TypeError):
        KeyElement("causal", "not a relation")
    with pytest.raises(TypeError):
        KeyElementSet("event", [KeyElement("temporal", TemporalRelation(earlier="A", later="B"))])


@pytest.mark.parametrize("table,expected", [
    ({"e1": 1, "e2": 1, "e3": 1}, 1.0),
    ({}, 0.0),
    ({"e1": 1, "e3": 1}, 2 / 3),
])
def test_recall_three_elements(table, expected):
    res = recall_for_kind(events("e1", "e2", "e3"), summary(), VerdictStub(table))
    assert res.recall == expected
    assert res.total == 3 and res.present


def test_empty_set_is_absent():
    res = recall_for_kind(events(), summary(), VerdictStub())
    assert res.recall is None and not res.present and res.total == 0


def test_empty_summary_rejected():
    with pytest.raises(ValueError):
        recall_for_kind(events("e1"), summary(" "), VerdictStub())


def test_discriminator_failure_names_element():
    class Down:
        name = "down"

        def judge(self, summary, element, corefs=()):
            raise ConnectionError("unreachable")

    with pytest.raises(DiscriminatorFailure) as exc:
        recall_for_kind(events("e1"), summary(), Down())
    assert exc.value.element.payload == "e1"


def test_non_binary_verdict_rejected():
    with pytest.raises(DiscriminatorFailure):
        recall_for_kind(events("e1"), summary(), VerdictStub({"e1": 2}))


@settings(max_examples=60, deadline=None)
@given(verdicts=st.lists(st.integers(0, 1), min_size=1, max_size=12), jobs=st.sampled_from([1, 4]))
def test_recall_is_entailed_fraction(verdicts, jobs):
    names = [f"e{i}" for i in range(len(verdicts))]
    res = recall_for_kind(events(*names), summary(), VerdictStub(dict(zip(names, verdicts))), jobs=jobs)
    assert res.recall == sum(verdicts) / len(verdicts)
    assert [v for _, v in res.per_element] == verdicts


# --------------------------------------------------------- containment oracle

def test_containment_substring():
    assert containment_oracle().judge("据报道，29人遇难，多人失踪", "29人遇难") == 1


def test_containment_no_numeral_folding():
    assert containment_oracle().judge("共二十九人遇难", "29人遇难") == 0


def test_containment_coref_clause():
    assert containment_oracle().judge("冀中多地受灾", "河北", ("冀",)) == 1
    assert containment_oracle().judge("多地受灾", "河北", ("冀",)) == 0


def test_containment_normalizes_width_and_space():
    assert containment_oracle().judge("２９ 人 遇难", "29人遇难") == 1


# ------------------------------------------------------------ evaluate_summary

def annotated_instance():
    g = GlobalAnnotation(
        sub_events=("暴雨导致29人遇难", "救援队抵达涿州"),
        arguments=(Argument(text="河北", role="location", corefs=("冀",)),
                   Argument(text="2023年7月29日", role="time"),
                   Argument(text="应急管理部", role="organization")),
        causal=(CausalRelation(cause_sentence="暴雨导致29人遇难", effect_sentence="救援队抵达涿州"),),
    )
    return make_instance(reference="暴雨导致29人遇难。救援队抵达涿州。", reference_kind="human",
                         global_annotation=g,
                         temporal=(TemporalRelation(earlier="暴雨导致29人遇难", later="救援队抵达涿州"),))


def test_all_entail_gives_ones():
    res = evaluate_summary(annotated_instance(), summary(), VerdictStub(default=1))
    assert {k: r.recall for k, r in res.items()} == {"event": 1.0, "argument": 1.0, "causal": 1.0, "temporal": 1.0}
    assert [r.total for r in res.values()] == [2, 3, 1, 1]


def test_missing_global_annotation_only_temporal():
    inst = make_instance(temporal=(TemporalRelation(earlier="暴雨来袭", later="救援展开"),))
    res = evaluate_summary(inst, summary(), VerdictStub(default=1))
    assert list(res) == ["temporal"]


def test_no_annotation_at_all():
    assert evaluate_summary(make_instance(), summary(), VerdictStub(default=1)) == {}


def test_containment_verdict_vector():
    text = "2023年7月29日起，冀中暴雨导致29人遇难。随后救援队抵达涿州。"
    res = evaluate_summary(annotated_instance(), summary(text), containment_oracle())
    # sub-events: both sentences appear verbatim
    assert [v for _, v in res["event"].per_element] == [1, 1]
    # arguments: 河北 via coref 冀, the date verbatim, 应急管理部 absent
    assert [v for _, v in res["argument"].per_element] == [1, 1, 0]
    # the causal and temporal templates add connective words not in the summary
    assert res["causal"].recall == 0.0 and res["temporal"].recall == 0.0
    rows = verdict_records(summary(text), res)
    assert len(rows) == 7
    assert rows[2] == {"instance_id": "evt-1", "system_id": "sys", "shots": 0, "kind": "argument",
                       "index": 0, "element": "河北", "verdict": 1}


# -------------------------------------------------------- HTTP discriminator

def http_stub(answer):
    seen = []

    def handler(request: httpx.Request):
        body = json.loads(request.content)
        seen.append((request.url.path, body))
        if request.url.path.endswith("/judge/batch"):
            return httpx.Response(200, json={"entailed": [answer(s, e) for s, e in zip(body["summary"], body["element"])]})
        return httpx.Response(200, json={"entailed": answer(body["summary"], body["element"])})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpDiscriminator("http://nli.local/", client=client), seen


def test_http_single_and_coref_batch():
    disc, seen = http_stub(lambda s, e: int(e in s))
    assert disc.judge("29人遇难", "29人遇难") == 1
    assert disc.judge("冀中受灾", "河北", ("冀",)) == 1
    assert [p for p, _ in seen] == ["/judge", "/judge/batch"]
    assert seen[1][1] == {"summary": ["冀中受灾", "冀中受灾"], "element": ["河北", "冀"]}


def test_http_non_binary_reply():
    disc, _ = http_stub(lambda s, e: 0.7)
    with pytest.raises(EventEvalError):
        disc.judge("a", "b")


def test_http_error_becomes_discriminator_failure():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(503)))
    disc = HttpDiscriminator("http://nli.local", client=client)
    with pytest.raises(DiscriminatorFailure):
        recall_for_kind(events("e1"), summary(), disc)
