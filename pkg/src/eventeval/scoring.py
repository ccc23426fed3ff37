"""Score predictions against a corpus: all eight metrics per prediction."""

from __future__ import annotations

import logging
from collections.abc import Sequence

from .analysis import ScoreRecord
from .data_model import GeneratedSummary, Instance
from .metrics import TokenEncoder, rouge_l, rouge_n, semantic_f1
from .recall_metrics import KIND_COLUMNS, Discriminator, evaluate_summary, verdict_records

logger = logging.getLogger(__name__)


def score_prediction(instance: Instance, pred: GeneratedSummary, discriminator: Discriminator,
                     encoder: TokenEncoder, jobs: int = 1) -> tuple[ScoreRecord, list[dict]]:
    recalls = evaluate_summary(instance, pred, discriminator, jobs)
    values = {
        "r1": rouge_n(pred.text, instance.reference, 1).f1,
        "r2": rouge_n(pred.text, instance.reference, 2).f1,
        "rl": rouge_l(pred.text, instance.reference).f1,
        "semantic_f1": semantic_f1(pred.text, instance.reference, encoder).f1,
    }
    for kind, column in KIND_COLUMNS.items():
        res = recalls.get(kind)
        values[column] = res.recall if res is not None else None
    record = ScoreRecord(instance_id=pred.instance_id, system_id=pred.system_id, shots=pred.shots, **values)
    return record, verdict_records(pred, recalls)


def score_predictions(instances: Sequence[Instance], predictions: Sequence[GeneratedSummary],
                      discriminator: Discriminator, encoder: TokenEncoder,
                      jobs: int = 1) -> tuple[list[ScoreRecord], list[dict]]:
    """Predictions whose instance is not in the corpus are skipped with a warning."""
    by_id = {inst.instance_id: inst for inst in instances}
    records, verdicts = [], []
    for pred in predictions:
        inst = by_id.get(pred.instance_id)
        if inst is None:
            logger.warning("prediction for unknown instance %s skipped", pred.instance_id)
            continue
        rec, rows = score_prediction(inst, pred, discriminator, encoder, jobs)
        records.append(rec)
        verdicts.extend(rows)
    return records, verdicts
