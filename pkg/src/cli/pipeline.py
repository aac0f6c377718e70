import logging
from pathlib import Path
from typing import Any, Dict, List

from pydantic import BaseModel, Field

from ..evaluation import format_table, oracle_wer, selection_wer, werr
from ..lm import ModelConfig, build_model, count_params, save_checkpoint
from ..models import NBestRecord, ReportRow, RescoreWeights
from ..rescoring import first_pass_top, rescore, score_nbest, tune_alpha, write_nbest
from ..synthetic import CorruptionRates, SyntheticSource, synth_nbest
from ..tokenizer import BPETokenizer
from ..training import KDConfig, TokenizedCorpus, TrainConfig, train_ce, train_kd
from ..utils.seeding import derive_seed
from .commands import write_lines

logger = logging.getLogger(__name__)


class PipelineSettings(BaseModel):
    """Sizes for the desk-scale synthetic end-to-end run."""
    order: int = 2
    vocab: int = 50
    sharpness: float = 2.0
    length: int = 20
    train_lines: int = 4000
    dev_lines: int = 300
    bpe_size: int = 400
    teacher_dims: Dict[str, int] = Field(
        default_factory=lambda: {"n_layers": 2, "n_heads": 4, "d_embed": 64, "d_hidden": 64, "d_ffn": 256}
    )
    student_dims: Dict[str, int] = Field(
        default_factory=lambda: {"n_layers": 1, "n_heads": 2, "d_embed": 32, "d_hidden": 32, "d_ffn": 128}
    )
    max_context: int = 32
    train_steps: int = 600
    batch_size: int = 32
    learning_rate: float = 3e-3
    kd: KDConfig = Field(default_factory=KDConfig)
    dev_records: int = 200
    test_records: int = 200
    n: int = 10
    rates: CorruptionRates = Field(default_factory=CorruptionRates)
    seed: int = 0


def _first_pass(records: List[NBestRecord]) -> float:
    return selection_wer(records, [first_pass_top(r) for r in records]).wer


def run_synthetic_pipeline(workdir: Path, settings: PipelineSettings = PipelineSettings()) -> Dict[str, Any]:
    """
    synth-gen -> bpe-train -> lm-train (teacher) -> distill (student) ->
    synth-nbest -> rescore with dev-tuned alpha -> eval-wer, all in-process.

    Artifacts (corpora, tokenizer, checkpoints, n-best files) are written
    under ``workdir``; the returned summary holds WERs and the report table.
    """
    workdir = Path(workdir)
    seed = settings.seed
    source = SyntheticSource(settings.order, settings.vocab, seed=seed, sharpness=settings.sharpness)

    train_lines = source.sample_lines(settings.train_lines, settings.length, seed=derive_seed(seed, "synth.train"))
    dev_lines = source.sample_lines(settings.dev_lines, settings.length, seed=derive_seed(seed, "synth.dev"))
    write_lines(workdir / "train.txt", train_lines)
    write_lines(workdir / "dev.txt", dev_lines)

    tokenizer = BPETokenizer.train(train_lines, settings.bpe_size)
    tokenizer.save(workdir / "tokenizer")
    corpus = TokenizedCorpus.from_lines(tokenizer, train_lines, dev_lines)
    vocab_size = len(tokenizer.vocab)

    train_config = TrainConfig(
        learning_rate=settings.learning_rate,
        batch_size=settings.batch_size,
        max_steps=settings.train_steps,
        eval_interval=max(1, settings.train_steps // 5),
        seed=derive_seed(seed, "training"),
        log_path=workdir / "train.log.jsonl",
    )
    teacher_config = ModelConfig(vocab_size=vocab_size, max_context=settings.max_context, dropout=0.1,
                                 **settings.teacher_dims)
    teacher = build_model(teacher_config, seed=derive_seed(seed, "model.init"))
    teacher_result = train_ce(teacher, corpus.train, train_config, corpus.dev, name="teacher")
    save_checkpoint(workdir / "teacher.ckpt", teacher)

    student_config = ModelConfig(vocab_size=vocab_size, max_context=settings.max_context, dropout=0.0,
                                 softmax_mode="adaptive", **settings.student_dims)
    student = build_model(student_config, seed=derive_seed(seed, "student.init"))
    student_result = train_kd(student, teacher, corpus.train, settings.kd, train_config, corpus.dev, name="student")
    save_checkpoint(workdir / "student.ckpt", student)

    dev = synth_nbest(source, settings.dev_records, settings.n, settings.rates, length=settings.length,
                      seed=derive_seed(seed, "synth.nbest.dev"))
    test = synth_nbest(source, settings.test_records, settings.n, settings.rates, length=settings.length,
                       seed=derive_seed(seed, "synth.nbest.test"))
    write_nbest(workdir / "dev.nbest.jsonl", dev)
    write_nbest(workdir / "test.nbest.jsonl", test)

    baseline = _first_pass(test)
    rows = [ReportRow(approach="n-gram", wer=baseline)]
    summary: Dict[str, Any] = {
        "first_pass_wer": baseline,
        "oracle_wer": oracle_wer(test).wer,
        "systems": {},
    }
    for name, model, result in (("teacher", teacher, teacher_result), ("student", student, student_result)):
        tuning = tune_alpha(score_nbest(dev, model, tokenizer))
        rescored = rescore(score_nbest(test, model, tokenizer), RescoreWeights(alpha=tuning.alpha))
        write_nbest(workdir / f"test.{name}.rescored.jsonl", rescored)
        system_wer = selection_wer(rescored, [r.selected for r in rescored]).wer
        params = count_params(model.config).total
        summary["systems"][name] = {
            "alpha": tuning.alpha,
            "wer": system_wer,
            "dev_ppl": result.best_dev_ppl,
            "params": params,
        }
        rows.append(ReportRow(
            approach=name,
            bpe=vocab_size,
            params=params,
            wer=system_wer,
            werr=werr(baseline, system_wer) if baseline > 0 else 0.0,
        ))
    summary["table"] = format_table(rows, "wer")
    logger.info(f"Synthetic pipeline finished:\n{summary['table']}")
    return summary
