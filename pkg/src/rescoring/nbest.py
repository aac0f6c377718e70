import json
import logging
from pathlib import Path
from typing import Iterable, List, Union

from pydantic import ValidationError

from ..exceptions import RescoringError
from ..models import NBestRecord

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 50


def parse_record(payload: dict, scores_are_costs: bool = False, n_max: int = DEFAULT_N_MAX) -> NBestRecord:
    """Validate one n-best JSON object, flipping cost signs and truncating to ``n_max``."""
    if scores_are_costs:
        payload = dict(payload)
        payload["hyps"] = [
            {**hyp, "am": -float(hyp["am"]), "ngram": -float(hyp["ngram"])} for hyp in payload.get("hyps", [])
        ]
    record = NBestRecord.model_validate(payload)
    if len(record.candidates) > n_max:
        logger.warning(
            f"Truncating n-best list: utt_id={record.utterance_id}, candidates={len(record.candidates)}, n_max={n_max}"
        )
        record.candidates = record.candidates[:n_max]
    return record


def read_nbest(path: Union[str, Path], scores_are_costs: bool = False, n_max: int = DEFAULT_N_MAX) -> List[NBestRecord]:
    """
    Read a JSON-lines n-best file.

    Args:
        path: one record per line, ``{"utt_id", "ref", "hyps": [{"text", "am", "ngram"}]}``
        scores_are_costs: input scores are negated log-scores; flip them on ingestion
        n_max: longer candidate lists keep only their first ``n_max`` entries

    Returns:
        List[NBestRecord]: records in file order

    Raises:
        RescoringError: malformed line or duplicate utterance id
    """
    records: List[NBestRecord] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = parse_record(json.loads(line), scores_are_costs, n_max)
            except (json.JSONDecodeError, ValidationError, KeyError, TypeError, ValueError) as e:
                raise RescoringError(f"{path}:{line_no}: invalid n-best record: {e}") from e
            if record.utterance_id in seen:
                raise RescoringError(f"{path}:{line_no}: duplicate utt_id '{record.utterance_id}'")
            seen.add(record.utterance_id)
            records.append(record)
    logger.info(f"Read n-best file: path={path}, records={len(records)}")
    return records


def write_nbest(path: Union[str, Path], records: Iterable[NBestRecord]):
    """Write records as JSON-lines; rescored output carries ``nlm`` and ``selected``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json(by_alias=True) + "\n")
            count += 1
    logger.info(f"Wrote n-best file: path={path}, records={count}")
