"""Summarization runs: prompt assembly, generation backends and resumable,
append-only prediction files."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx
from pydantic import BaseModel, ConfigDict, Field

from .data_model import GeneratedSummary, Instance, dumps_record
from .errors import BackendFailure, ContextOverflow, EventEvalError, RunAborted
from .text import split_sentences

logger = logging.getLogger(__name__)


class GenerationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    temperature: float = Field(0.01, ge=0.0)
    max_output_length: int | None = Field(None, ge=1)
    seed: int | None = None


class GenerationBackend(Protocol):
    name: str
    context_limit: int | None

    def generate(self, prompt: str, params: GenerationParams) -> str: ...


class PromptTemplate(BaseModel):
    model_config = ConfigDict(frozen=True)

    preamble: str = (
        "请阅读以下关于同一动态事件的多篇新闻文档，围绕该事件按时间顺序生成一段简洁、全面的中文摘要，"
        "涵盖关键子事件、时间、地点、人物、机构以及事件之间的因果和时间关系。摘要请控制在200字左右。\n"
    )
    doc_header: str = "文档{index}:"
    doc_delimiter: str = "\n"
    demonstration_block: str = "示例{index}:\n{documents}\n摘要:{summary}\n\n"
    target_header: str = ""
    answer_prefix: str = ""

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(), ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def load(cls, path: str | Path | None) -> "PromptTemplate":
        if path is None:
            return cls()
        return cls.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))


def render_documents(bodies: Sequence[str], template: PromptTemplate) -> str:
    return template.doc_delimiter.join(
        template.doc_header.format(index=i) + body for i, body in enumerate(bodies, start=1)
    )


def _assemble(bodies: Sequence[str], demonstrations, template: PromptTemplate) -> str:
    parts = [template.preamble]
    for j, (demo, summary) in enumerate(demonstrations, start=1):
        docs = render_documents([d.body for d in demo.documents], template)
        parts.append(template.demonstration_block.format(index=j, documents=docs, summary=summary))
    parts.append(template.target_header)
    parts.append(render_documents(bodies, template))
    parts.append(template.answer_prefix)
    return "".join(parts)


def _shrink_longest(bodies: list[str], excess: int) -> bool:
    """Cut ``excess`` characters off the tails of the longest bodies, levelling
    them down one at a time. Returns False when nothing is left to cut."""
    while excess > 0:
        lengths = sorted({len(b) for b in bodies}, reverse=True)
        if lengths[0] == 0:
            return False
        floor = lengths[1] if len(lengths) > 1 else 0
        longest = [i for i, b in enumerate(bodies) if len(b) == lengths[0]]
        per_doc = max(1, min(lengths[0] - floor, -(-excess // len(longest))))
        for i in longest:
            cut = min(per_doc, excess, len(bodies[i]))
            bodies[i] = bodies[i][:len(bodies[i]) - cut]
            excess -= cut
            if excess <= 0:
                break
    return True


def build_prompt(instance: Instance, demonstrations: Sequence[tuple[Instance, str]], template: PromptTemplate,
                 context_limit: int | None = None, truncate: bool = False) -> str:
    """Preamble, k demonstration blocks, then the instance's numbered documents.

    Lengths are counted in characters. Over-limit prompts raise
    :class:`ContextOverflow` unless ``truncate`` is set, in which case the
    longest target documents lose their tails first.
    """
    bodies = [d.body for d in instance.documents]
    prompt = _assemble(bodies, demonstrations, template)
    if context_limit is None or len(prompt) <= context_limit:
        return prompt
    if not truncate:
        raise ContextOverflow(len(prompt), context_limit)
    if not _shrink_longest(bodies, len(prompt) - context_limit):
        raise ContextOverflow(len(prompt), context_limit)
    prompt = _assemble(bodies, demonstrations, template)
    if len(prompt) > context_limit:
        raise ContextOverflow(len(prompt), context_limit)
    return prompt


def sample_demonstrations(pool: Sequence[Instance], k: int, seed: int, key: str,
                          exclude: set[str] = frozenset()) -> list[tuple[Instance, str]]:
    """k training instances drawn uniformly without replacement. The draw
    depends only on (seed, key) so resumed runs pick the same exemplars."""
    if k == 0:
        return []
    eligible = [inst for inst in pool if inst.instance_id not in exclude]
    if len(eligible) < k:
        raise EventEvalError(f"need {k} demonstrations but only {len(eligible)} eligible training instances")
    rng = random.Random(f"{seed}:{key}")
    return [(inst, inst.reference) for inst in rng.sample(eligible, k)]


# ------------------------------------------------------------------ backends

class EchoBackend:
    """Returns the last ``max_chars`` characters of the prompt."""

    def __init__(self, max_chars: int = 200, context_limit: int | None = None, name: str = "echo"):
        self.max_chars = max_chars
        self.context_limit = context_limit
        self.name = name

    def generate(self, prompt: str, params: GenerationParams) -> str:
        return prompt[-self.max_chars:]


class LeadBackend:
    """Extractive mock summarizer: the first sentence of each target
    document, in document order."""

    def __init__(self, template: PromptTemplate | None = None, max_sentences: int = 20,
                 context_limit: int | None = None, name: str = "lead"):
        self.template = template or PromptTemplate()
        self.max_sentences = max_sentences
        self.context_limit = context_limit
        self.name = name

    def generate(self, prompt: str, params: GenerationParams) -> str:
        head = re.escape(self.template.doc_header).replace(r"\{index\}", r"\d+")
        first = re.escape(self.template.doc_header.format(index=1))
        start = [m.start() for m in re.finditer(first, prompt)]
        target = prompt[start[-1]:] if start else prompt
        bodies = [b for b in re.split(head, target) if b.strip()]
        leads = []
        for body in bodies[:self.max_sentences]:
            sents = split_sentences(body.strip())
            if sents:
                leads.append(sents[0])
        return "".join(leads)


class OpenAIChatBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    Reads ``EVENTEVAL_API_BASE`` and ``EVENTEVAL_API_KEY`` when not given.
    """

    def __init__(self, model: str, base_url: str | None = None, api_key: str | None = None,
                 context_limit: int | None = None, client: httpx.Client | None = None, timeout: float = 300.0):
        self.model = model
        self.name = model
        self.base_url = (base_url or os.environ.get("EVENTEVAL_API_BASE", "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("EVENTEVAL_API_KEY", "")
        self.context_limit = context_limit
        self.client = client or httpx.Client(timeout=timeout)

    def generate(self, prompt: str, params: GenerationParams) -> str:
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}],
                "temperature": params.temperature}
        if params.max_output_length is not None:
            body["max_tokens"] = params.max_output_length
        if params.seed is not None:
            body["seed"] = params.seed
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = self.client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


# ---------------------------------------------------------------------- runs

@dataclass
class RunResult:
    summaries: list[GeneratedSummary]
    skipped: list[dict] = field(default_factory=list)
    predictions_path: Path | None = None
    manifest_path: Path | None = None


def run_paths(out_dir: str | Path, system_id: str, shots: int) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    stem = f"{system_id}.{shots}shot"
    return out_dir / f"{stem}.jsonl", out_dir / f"{stem}.manifest.json"


def _recover(path: Path) -> list[GeneratedSummary]:
    """Read persisted predictions, dropping a torn final line left by a kill."""
    if not path.exists():
        return []
    raw = path.read_bytes()
    good_end = 0
    done = []
    for line in raw.splitlines(keepends=True):
        if not line.endswith(b"\n"):
            break
        try:
            done.append(GeneratedSummary.model_validate_json(line))
        except ValueError:
            break
        good_end += len(line)
    if good_end != len(raw):
        logger.warning("%s: discarding %d bytes of incomplete output", path, len(raw) - good_end)
        with path.open("r+b") as fh:
            fh.truncate(good_end)
    return done


def run_batch(instances: Sequence[Instance], backend: GenerationBackend, params: GenerationParams,
              template: PromptTemplate, shots: int, out: str | Path, *, system_id: str | None = None,
              demo_pool: Sequence[Instance] = (), seed: int = 0, jobs: int = 1, retries: int = 2,
              truncate: bool = False, max_skip_rate: float = 0.5) -> RunResult:
    """Generate one summary per instance, appending to the predictions file.

    Instances already present in the file are not regenerated. Prompt
    overflows and exhausted backend retries are skipped and listed in the
    run manifest; more than ``max_skip_rate`` skips aborts the run.
    """
    system_id = system_id or backend.name
    pred_path, manifest_path = run_paths(out, system_id, shots)
    pred_path.parent.mkdir(parents=True, exist_ok=True)

    target_ids = {inst.instance_id for inst in instances}
    done = _recover(pred_path)
    done_keys = {p.key for p in done}
    todo = [inst for inst in instances if (inst.instance_id, system_id, shots) not in done_keys]

    skipped: list[dict] = []
    demos_used: dict[str, list[str]] = {}
    jobs_in: list[tuple[Instance, str]] = []
    pending = {inst.instance_id for inst in todo}
    for inst in instances:
        demos = sample_demonstrations(demo_pool, shots, seed, inst.instance_id, exclude=target_ids) if shots else []
        if demos:
            demos_used[inst.instance_id] = [d.instance_id for d, _ in demos]
        if inst.instance_id not in pending:
            continue
        try:
            prompt = build_prompt(inst, demos, template, backend.context_limit, truncate)
        except ContextOverflow as exc:
            skipped.append({"instance_id": inst.instance_id, "reason": "context_overflow", "detail": str(exc)})
            continue
        jobs_in.append((inst, prompt))

    def call(item: tuple[Instance, str]) -> str | BackendFailure:
        inst, prompt = item
        last = None
        for _ in range(retries + 1):
            try:
                text = backend.generate(prompt, params)
            except Exception as exc:
                last = exc
                continue
            if text and text.strip():
                return text.strip()
            last = ValueError("empty generation")
        return BackendFailure(f"{inst.instance_id}: {last}")

    def write_manifest():
        manifest = {
            "system_id": system_id,
            "backend": backend.name,
            "shots": shots,
            "params": params.model_dump(),
            "template_hash": template.digest(),
            "seed": seed,
            "n_instances": len(instances),
            "n_written": len(done) + len(written),
            "skipped": skipped,
            "demonstrations": demos_used,
        }
        manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")

    written: list[GeneratedSummary] = []
    limit = max_skip_rate * len(instances)
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        results = pool.map(call, jobs_in) if pool else map(call, jobs_in)
        with pred_path.open("a", encoding="utf-8", newline="\n") as fh:
            if len(skipped) > limit:
                raise RunAborted(f"{len(skipped)} of {len(instances)} instances skipped")
            for (inst, _), result in zip(jobs_in, results):
                if isinstance(result, BackendFailure):
                    skipped.append({"instance_id": inst.instance_id, "reason": "backend_failure",
                                    "detail": str(result)})
                    if len(skipped) > limit:
                        raise RunAborted(f"{len(skipped)} of {len(instances)} instances skipped")
                    continue
                pred = GeneratedSummary(instance_id=inst.instance_id, system_id=system_id, text=result, shots=shots)
                fh.write(dumps_record(pred) + "\n")
                fh.flush()
                written.append(pred)
    except RunAborted:
        write_manifest()
        raise
    finally:
        if pool:
            pool.shutdown(wait=False, cancel_futures=True)
    position = {inst.instance_id: n for n, inst in enumerate(instances)}
    skipped.sort(key=lambda s: position[s["instance_id"]])
    write_manifest()
    return RunResult(done + written, skipped, pred_path, manifest_path)
