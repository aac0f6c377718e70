import logging
from argparse import Namespace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from ..config import ExperimentConfig, TrainingSection
from ..evaluation import (
    bench_latency, corpus_wer, nbest_wer, oracle_wer, perplexity, selection_wer, speedup, werr,
)
from ..exceptions import ConfigError, VocabularyMismatchError
from ..lm import TransformerLM, build_model, count_params, load_checkpoint, save_checkpoint
from ..models import NBestRecord, RescoreWeights
from ..rescoring import (
    candidate_ids, first_pass_top, read_nbest, rescore, score_nbest, tune_alpha, write_nbest,
)
from ..synthetic import CorruptionRates, SyntheticSource, synth_nbest
from ..tokenizer import BPETokenizer
from ..training import KDConfig, TokenizedCorpus, TrainConfig, pretrain_finetune, train_ce, train_kd
from ..utils.seeding import derive_seed

logger = logging.getLogger(__name__)

Handler = Callable[[Namespace, ExperimentConfig], Dict[str, Any]]


TOP_LEVEL_FLAGS = ("seed",)


def overrides_from_args(args: Namespace) -> Dict[str, Any]:
    """Nested config overrides from flags whose ``dest`` is a dotted config path."""
    overrides: Dict[str, Any] = {}
    for dest, value in vars(args).items():
        if value is None or ("." not in dest and dest not in TOP_LEVEL_FLAGS):
            continue
        node = overrides
        *parents, leaf = dest.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return overrides


def read_lines(path: Optional[Path], what: str) -> List[str]:
    if path is None:
        raise ConfigError(f"no {what} given")
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f]
    return [line for line in lines if line]


def write_lines(path: Path, lines: List[str]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def _require(value, what: str):
    if value is None:
        raise ConfigError(f"missing required setting: {what}")
    return value


def load_tokenizer(config: ExperimentConfig) -> BPETokenizer:
    directory = _require(config.tokenizer.output_dir, "tokenizer directory (--tokenizer)")
    return BPETokenizer.load(directory, lowercase=config.tokenizer.lowercase)


def _train_config(config: TrainConfig, seed: int, component: str) -> TrainConfig:
    return config.model_copy(update={"seed": derive_seed(seed, component)})


def _check_model_vocab(model: TransformerLM, tokenizer: BPETokenizer):
    if model.vocab_size != len(tokenizer.vocab):
        raise VocabularyMismatchError(
            f"model expects {model.vocab_size} units, tokenizer has {len(tokenizer.vocab)}"
        )


def _corpus(tokenizer: BPETokenizer, train: Optional[Path], dev: Optional[Path], what: str) -> TokenizedCorpus:
    return TokenizedCorpus.from_lines(
        tokenizer, read_lines(train, f"{what} corpus"), read_lines(dev, f"{what} dev corpus") if dev else []
    )


def _save_model(model: TransformerLM, path: Optional[Path]) -> Optional[str]:
    if path is None:
        logger.warning("No --model-out given; the trained model is not saved")
        return None
    save_checkpoint(path, model)
    return str(path)


# --- commands ---

def cmd_bpe_train(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    section = config.tokenizer
    lines = read_lines(section.corpus, "tokenizer corpus (--corpus)")
    out_dir = _require(section.output_dir, "tokenizer output directory (--out-dir)")
    tokenizer = BPETokenizer.train(lines, section.vocab_size, section.lowercase)
    tokenizer.save(out_dir)
    return {
        "tokenizer": str(out_dir),
        "vocab_size": len(tokenizer.vocab),
        "merges": len(tokenizer.merges),
        "digest": tokenizer.vocab.digest(),
    }


def cmd_lm_train(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    tokenizer = load_tokenizer(config)
    corpus = _corpus(tokenizer, config.training.corpus, config.training.dev_corpus, "training")
    model_config = config.model.build(len(tokenizer.vocab))
    model = build_model(model_config, seed=derive_seed(config.seed, "model.init"))
    result = train_ce(
        model, corpus.train, _train_config(config.training.train, config.seed, "training"), corpus.dev or None
    )
    return {
        "params": count_params(model_config).total,
        "best_step": result.best_step,
        "dev_ppl": result.best_dev_ppl,
        "final_train_loss": result.train_losses[-1],
        "checkpoint": _save_model(model, config.training.model_out),
    }


def pretrain_settings(section: TrainingSection) -> TrainConfig:
    """Phase-1 settings: the pretrain section, else the training flags, with ``pretrain_steps`` applied."""
    settings = section.pretrain or section.train
    if section.pretrain_steps is not None:
        settings = settings.model_copy(update={"max_steps": section.pretrain_steps})
    return settings


def cmd_pretrain_finetune(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    section = config.training
    tokenizer = load_tokenizer(config)
    general = (
        _corpus(tokenizer, section.pretrain_corpus, section.pretrain_dev_corpus, "pre-training")
        if section.pretrain_corpus else TokenizedCorpus(train=[], vocab_size=len(tokenizer.vocab))
    )
    target = _corpus(tokenizer, section.corpus, section.dev_corpus, "fine-tuning")
    result = pretrain_finetune(
        config.model.build(len(tokenizer.vocab)),
        general,
        target,
        _train_config(pretrain_settings(section), config.seed, "pretraining"),
        _train_config(section.train, config.seed, "finetuning"),
    )
    return {
        "pretrain_dev_ppl": result.pretrain.best_dev_ppl if result.pretrain else None,
        "target_dev_ppl_before_pretraining": result.target_dev_ppl_before_pretraining,
        "finetune_dev_ppl": result.finetune.best_dev_ppl,
        "finetune_best_step": result.finetune.best_step,
        "checkpoint": _save_model(result.model, section.model_out),
    }


def cmd_distill(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    section = config.training
    tokenizer = load_tokenizer(config)
    teacher = load_checkpoint(_require(section.teacher_checkpoint, "teacher checkpoint (--teacher)"))
    _check_model_vocab(teacher, tokenizer)
    corpus = _corpus(tokenizer, section.corpus, section.dev_corpus, "training")
    student_config = config.model.build(len(tokenizer.vocab))
    student = build_model(student_config, seed=derive_seed(config.seed, "student.init"))
    result = train_kd(
        student, teacher, corpus.train, section.kd or KDConfig(),
        _train_config(section.train, config.seed, "distillation"), corpus.dev or None,
    )
    return {
        "params": count_params(student_config).total,
        "teacher_params": count_params(teacher.config).total,
        "best_step": result.best_step,
        "dev_ppl": result.best_dev_ppl,
        "checkpoint": _save_model(student, section.model_out),
    }


def _first_pass_wer(records: List[NBestRecord], lowercase: bool) -> Optional[float]:
    usable = [r for r in records if r.reference is not None and r.candidates]
    if not usable:
        return None
    return selection_wer(usable, [first_pass_top(r) for r in usable], lowercase).wer


def cmd_rescore(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    section = config.rescoring
    lowercase = config.evaluation.lowercase
    tokenizer = load_tokenizer(config)
    model = load_checkpoint(_require(section.model, "model checkpoint (--model)"))
    _check_model_vocab(model, tokenizer)

    records = read_nbest(_require(section.nbest_in, "--nbest-in"), section.scores_are_costs, section.n_max)
    scored = score_nbest(records, model, tokenizer, section.workers)

    tuning = None
    if section.alpha is not None:
        alpha = section.alpha
    else:
        if section.dev_nbest is not None:
            dev = read_nbest(section.dev_nbest, section.scores_are_costs, section.n_max)
            dev = score_nbest(dev, model, tokenizer, section.workers)
        else:
            logger.info("No --dev-nbest given; tuning alpha on the input records")
            dev = scored
        tuning = tune_alpha(dev, section.tune_grid, lowercase)
        alpha = tuning.alpha

    rescored = rescore(scored, RescoreWeights(alpha=alpha))
    if section.nbest_out is not None:
        write_nbest(section.nbest_out, rescored)

    result: Dict[str, Any] = {"alpha": alpha, "records": len(rescored), "nbest_out": section.nbest_out}
    if tuning is not None:
        result["tuning"] = tuning
    first_pass = _first_pass_wer(rescored, lowercase)
    if first_pass is not None:
        system = nbest_wer(rescored, lowercase)
        result["first_pass_wer"] = first_pass
        result["rescored_wer"] = system.wer
        result["werr"] = werr(first_pass, system.wer) if first_pass > 0 else 0.0
    return result


def cmd_eval_wer(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    lowercase = config.evaluation.lowercase
    if args.ref is not None or args.hyp is not None:
        refs = read_lines(args.ref, "reference file (--ref)")
        hyps = read_lines(args.hyp, "hypothesis file (--hyp)")
        if len(refs) != len(hyps):
            raise ConfigError(f"{len(refs)} references but {len(hyps)} hypotheses")
        return {"wer": corpus_wer(zip(refs, hyps), lowercase)}

    section = config.rescoring
    records = read_nbest(_require(section.nbest_in, "--nbest-in"), section.scores_are_costs, section.n_max)
    first_pass = _first_pass_wer(records, lowercase)
    if first_pass is None:
        raise ConfigError("n-best file has no references to score against")
    result: Dict[str, Any] = {
        "first_pass_wer": first_pass,
        "oracle": oracle_wer(records, lowercase),
    }
    if any(r.selected is not None for r in records):
        selected = nbest_wer(records, lowercase)
        result["selected"] = selected
        result["werr"] = werr(first_pass, selected.wer) if first_pass > 0 else 0.0
    return result


def cmd_eval_ppl(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    section = config.evaluation
    if not section.models:
        raise ConfigError("missing required setting: model checkpoint (--model)")
    tokenizer = load_tokenizer(config)
    documents = [tokenizer.encode(line) for line in read_lines(section.corpus, "evaluation corpus (--corpus)")]
    results = []
    for path in section.models:
        model = load_checkpoint(path)
        _check_model_vocab(model, tokenizer)
        results.append({"model": str(path), "perplexity": perplexity(model, documents)})
    return {"results": results}


def _bench_texts(config: ExperimentConfig) -> List[str]:
    if config.rescoring.nbest_in is not None:
        records = read_nbest(config.rescoring.nbest_in, config.rescoring.scores_are_costs, config.rescoring.n_max)
        texts = [c.text for r in records for c in r.candidates if c.text.strip()]
    else:
        texts = read_lines(config.evaluation.corpus, "benchmark sample (--nbest-in or --corpus)")
    return texts[:config.evaluation.bench_candidates]


def cmd_bench(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    section = config.evaluation
    if not section.models:
        raise ConfigError("missing required setting: model checkpoint (--model)")
    tokenizer = load_tokenizer(config)
    sample = [candidate_ids(text, tokenizer) for text in _bench_texts(config)]
    reports = []
    for path in section.models:
        model = load_checkpoint(path)
        _check_model_vocab(model, tokenizer)
        reports.append(bench_latency(model, sample, section.repetitions, model_id=Path(path).name))
    result: Dict[str, Any] = {"reports": reports}
    if len(reports) == 2:
        # how many times faster the second model ran than the first
        result["speedup"] = speedup(reports[1], reports[0])
    return result


def _source(args: Namespace, seed: int) -> SyntheticSource:
    source = SyntheticSource(args.order, args.vocab, seed=seed, sharpness=args.sharpness)
    if args.shift:
        source = source.perturbed(args.shift, derive_seed(seed, "synth.domain"))
    return source


def cmd_synth_gen(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    source = _source(args, config.seed)
    lines = source.sample_lines(args.lines, args.length, seed=derive_seed(config.seed, "synth.train"))
    write_lines(args.text_out, lines)
    result: Dict[str, Any] = {
        "lines": len(lines),
        "text_out": str(args.text_out),
        "entropy_rate": source.entropy_rate(),
        "analytic_perplexity": source.analytic_perplexity(args.length),
    }
    if args.dev_lines:
        dev_out = args.dev_out or Path(str(args.text_out) + ".dev")
        write_lines(dev_out, source.sample_lines(args.dev_lines, args.length, seed=derive_seed(config.seed, "synth.dev")))
        result["dev_out"] = str(dev_out)
    return result


def cmd_synth_nbest(args: Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    source = _source(args, config.seed)
    rates = CorruptionRates(substitution=args.sub_rate, insertion=args.ins_rate, deletion=args.del_rate)
    records = synth_nbest(
        source, args.records, args.n, rates, length=args.length, ngram_lines=args.ngram_lines,
        am_noise=args.am_noise, seed=derive_seed(config.seed, f"synth.nbest.{args.split}"),
    )
    write_nbest(args.nbest_out, records)
    return {
        "records": len(records),
        "nbest_out": str(args.nbest_out),
        "first_pass_wer": _first_pass_wer(records, False),
        "oracle_wer": oracle_wer(records).wer,
    }


COMMANDS: Dict[str, Handler] = {
    "bpe-train": cmd_bpe_train,
    "lm-train": cmd_lm_train,
    "lm-pretrain-finetune": cmd_pretrain_finetune,
    "distill": cmd_distill,
    "rescore": cmd_rescore,
    "eval-wer": cmd_eval_wer,
    "eval-ppl": cmd_eval_ppl,
    "bench": cmd_bench,
    "synth-gen": cmd_synth_gen,
    "synth-nbest": cmd_synth_nbest,
}
