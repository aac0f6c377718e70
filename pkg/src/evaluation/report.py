import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel

from ..models import ReportRow

Column = Tuple[str, Callable[[ReportRow], str]]


def format_params(count: Optional[int]) -> str:
    if count is None:
        return ""
    if count >= 1_000_000:
        return f"{count / 1_000_000:.1f}M"
    if count >= 1_000:
        return f"{count / 1_000:.1f}K"
    return str(count)


def format_bpe(size: Optional[int]) -> str:
    if size is None:
        return ""
    return f"{size // 1000}K" if size >= 1000 and size % 1000 == 0 else str(size)


def _number(value: Optional[float], digits: int = 2) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def _flag(value: Optional[bool]) -> str:
    return "" if value is None else ("yes" if value else "no")


LAYOUTS: Dict[str, List[Column]] = {
    "wer": [
        ("Approach", lambda r: r.approach),
        ("#BPE", lambda r: format_bpe(r.bpe)),
        ("#Param", lambda r: format_params(r.params)),
        ("WER", lambda r: _number(r.wer)),
        ("WERR", lambda r: _number(r.werr)),
    ],
    "adaptive": [
        ("#BPE", lambda r: format_bpe(r.bpe)),
        ("AdaSoft", lambda r: _flag(r.adaptive)),
        ("#Param", lambda r: format_params(r.params)),
        ("WER", lambda r: _number(r.wer)),
    ],
    "teacher": [
        ("Teacher", lambda r: r.teacher or "none"),
        ("#BPE", lambda r: format_bpe(r.bpe)),
        ("Perplexity", lambda r: _number(r.perplexity)),
        ("WER", lambda r: _number(r.wer)),
    ],
    "pretrain": [
        ("Pre-trained", lambda r: _flag(r.pretrained)),
        ("#BPE", lambda r: format_bpe(r.bpe)),
        ("Perplexity", lambda r: _number(r.perplexity)),
        ("WER", lambda r: _number(r.wer)),
    ],
}


def format_table(rows: Sequence[ReportRow], layout: str = "wer") -> str:
    """Aligned plain-text table; first column left-aligned, the rest right-aligned."""
    if layout not in LAYOUTS:
        raise ValueError(f"unknown table layout '{layout}', expected one of {sorted(LAYOUTS)}")
    columns = LAYOUTS[layout]
    cells = [[header for header, _ in columns]] + [[fmt(row) for _, fmt in columns] for row in rows]
    widths = [max(len(line[i]) for line in cells) for i in range(len(columns))]

    def render(line: List[str]) -> str:
        parts = [line[0].ljust(widths[0])] + [cell.rjust(width) for cell, width in zip(line[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([render(cells[0]), rule] + [render(line) for line in cells[1:]])


def to_jsonable(result: Any) -> Any:
    if isinstance(result, BaseModel):
        return result.model_dump(mode="json")
    if isinstance(result, dict):
        return {k: to_jsonable(v) for k, v in result.items()}
    if isinstance(result, (list, tuple)):
        return [to_jsonable(v) for v in result]
    if isinstance(result, Path):
        return str(result)
    return result


def write_json(result: Any, out: Optional[Union[str, Path]] = None) -> str:
    """Serialize a result; written to ``out`` when given, returned either way."""
    text = json.dumps(to_jsonable(result), indent=2)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
    return text
