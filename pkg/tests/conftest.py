from __future__ import annotations

import numpy as np
import pytest

from eventeval.data_model import Document, Instance


class TableEmbedder:
    """Embedding stub with exact, table-driven similarities.

    Texts listed in ``sims`` score their table value against any text that
    is not listed (the anchor); identical texts score 1.0.
    """

    name = "table"

    def __init__(self, sims: dict[str, float], default: float = 0.0, fail: bool = False):
        self.sims = dict(sims)
        self.default = default
        self.fail = fail
        self._texts: list[str] = []

    def embed(self, texts):
        if self.fail:
            raise ConnectionError("embedding backend unreachable")
        out = []
        for t in texts:
            self._texts.append(t)
            out.append(np.array([len(self._texts) - 1], dtype=float))
        return out

    def similarity(self, a, b) -> float:
        ta, tb = self._texts[int(a[0])], self._texts[int(b[0])]
        if ta == tb:
            return 1.0
        if ta in self.sims and tb not in self.sims:
            return self.sims[ta]
        if tb in self.sims and ta not in self.sims:
            return self.sims[tb]
        return self.default


class VerdictStub:
    """Discriminator answering from a fixed element -> verdict table."""

    name = "stub"

    def __init__(self, table: dict[str, int] | None = None, default: int = 0):
        self.table = table or {}
        self.default = default
        self.calls: list[tuple[str, str]] = []

    def judge(self, summary, element, corefs=()):
        self.calls.append((summary, element))
        return self.table.get(element, self.default)


_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion verified by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        _criteria.append((status, marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for status, name in _criteria:
            terminalreporter.write_line(f"{status}  {name}")


def make_doc(i: int, body: str | None = None, **kw) -> Document:
    return Document(doc_id=f"d{i}", source="新华网", title=f"标题{i}", body=body or f"第{i}篇新闻正文。", **kw)


def make_instance(n_docs: int = 6, instance_id: str = "evt-1", **kw) -> Instance:
    fields = dict(instance_id=instance_id, event_title="2023年河北暴雨",
                  documents=tuple(make_doc(i) for i in range(n_docs)), reference="暴雨导致29人遇难。")
    fields.update(kw)
    return Instance(**fields)


@pytest.fixture
def instance_factory():
    return make_instance


_PLACES = ["河北", "北京", "上海", "广东", "四川", "云南", "湖南", "浙江", "江苏", "福建"]
_TRIGGERS = ["暴雨", "地震", "火灾", "台风", "洪水"]
_FILLERS = ["当地政府召开新闻发布会", "专家提醒市民注意安全", "相关部门正在调查原因",
            "志愿者送来了食品和饮用水", "交通部门发布出行提示", "学校宣布临时停课"]


def nli_event_records(n: int = 50):
    """Event source records: one sentence states the event, two are filler."""
    from eventeval.nli_builder import SourceRecord

    out = []
    for i in range(n):
        time = f"2023年{1 + i % 12}月{1 + i % 28}日"
        place = _PLACES[i % len(_PLACES)]
        trigger = _TRIGGERS[i % len(_TRIGGERS)]
        text = (f"{time}，{place}发生{trigger}。"
                f"{_FILLERS[i % 6]}。{_FILLERS[(i + 3) % 6]}。")
        out.append(SourceRecord(source_id=f"src-{i // 2}", kind="event", text=text,
                                event={"time": time, "location": place, "trigger": trigger}))
    return out
