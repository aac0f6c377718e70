import json
import logging
import math
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..exceptions import DivergenceError, VocabularyMismatchError
from ..lm.checkpoint import load_checkpoint, save_checkpoint, save_optimizer_state
from ..lm.config import ModelConfig
from ..lm.model import TransformerLM, build_model
from ..tensor import AdamState, ComputationGraph, Tensor, adam_step, apply, clip_grad_norm, no_grad
from ..tokenizer import PAD_ID
from ..utils.seeding import component_rng, derive_seed
from .config import KDConfig, TrainConfig
from .data import TokenizedCorpus, iterate_batches, pack_documents
from .distillation import kd_loss
from .schedule import lr_at

logger = logging.getLogger(__name__)

Documents = Sequence[Sequence[int]]
LossFn = Callable[[np.ndarray, np.ndarray, np.random.Generator], Tensor]


class EvalRecord(BaseModel):
    """One line of the JSON-lines training log."""
    step: int
    train_loss: Optional[float] = None
    dev_loss: Optional[float] = None
    dev_ppl: Optional[float] = None
    seconds: float


class TrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: TransformerLM
    history: List[EvalRecord]
    train_losses: List[float]
    best_step: int
    best_dev_ppl: Optional[float] = None


class PretrainFinetuneResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: TransformerLM
    pretrain: Optional[TrainResult] = None
    finetune: TrainResult
    target_dev_ppl_before_pretraining: Optional[float] = None


def _evaluate(model: TransformerLM, dev_documents: Documents) -> float:
    # local import keeps evaluation -> training dependency one-directional
    from ..evaluation.perplexity import corpus_nll

    total, count = corpus_nll(model, dev_documents)
    return total / count


class TrainingLoop:
    """
    Shared optimisation loop: batching, LR schedule, clipping, Adam, dev
    evaluation, best-dev snapshot and the JSON-lines training log.

    The loss is supplied as ``loss_fn(inputs, targets, dropout_rng)`` so
    cross-entropy and distillation share everything else.
    """

    def __init__(self, model: TransformerLM, config: TrainConfig, loss_fn: LossFn, name: str = "train"):
        self.model = model
        self.config = config
        self.loss_fn = loss_fn
        self.name = name
        self.state = AdamState.for_params(model.params)

    def _log(self, record: EvalRecord):
        if self.config.log_path is None:
            return
        path = Path(self.config.log_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps({"run": self.name, **record.model_dump()}) + "\n")

    def _save(self, tag: str):
        if self.config.checkpoint_dir is None:
            return
        directory = Path(self.config.checkpoint_dir)
        save_checkpoint(directory / f"{self.name}-{tag}.ckpt", self.model)
        save_optimizer_state(directory / f"{self.name}-{tag}.optim", self.state)

    def run(self, train_documents: Documents, dev_documents: Optional[Documents] = None) -> TrainResult:
        config = self.config
        windows = pack_documents(train_documents, self.model.config.max_context)
        batches = iterate_batches(windows, config.batch_size, component_rng(config.seed, f"{self.name}.batches"))
        dropout_rng = component_rng(config.seed, f"{self.name}.dropout")
        beta1, beta2 = config.adam_betas

        logger.info(
            f"Starting {self.name}: windows={len(windows)}, steps={config.max_steps}, "
            f"batch_size={config.batch_size}, lr={config.learning_rate}"
        )
        start = time.monotonic()
        history: List[EvalRecord] = []
        train_losses: List[float] = []
        best_loss, best_step, best_state = math.inf, 0, None

        def evaluate(step: int, train_loss: Optional[float]):
            nonlocal best_loss, best_step, best_state
            dev_loss = _evaluate(self.model, dev_documents) if dev_documents else None
            record = EvalRecord(
                step=step,
                train_loss=train_loss,
                dev_loss=dev_loss,
                dev_ppl=math.exp(dev_loss) if dev_loss is not None else None,
                seconds=round(time.monotonic() - start, 3),
            )
            history.append(record)
            self._log(record)
            logger.info(f"{self.name} step={step} train_loss={train_loss} dev_ppl={record.dev_ppl}")
            if dev_loss is not None and dev_loss < best_loss:
                best_loss, best_step, best_state = dev_loss, step, self.model.params.state_dict()
                self._save("best")

        if dev_documents:
            evaluate(0, None)

        since_eval: List[float] = []
        for step in range(1, config.max_steps + 1):
            batch = next(batches)
            inputs, targets = batch[:, :-1], batch[:, 1:]

            self.model.params.zero_grad()
            with ComputationGraph() as graph:
                loss = self.loss_fn(inputs, targets, dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"{self.name}: non-finite loss {value} at step {step}")
            graph.backward(loss)

            grads = self.model.params.grads()
            clip_grad_norm(grads, config.clip_norm)
            adam_step(self.model.params, grads, self.state, lr_at(step, config), beta1, beta2, config.adam_eps)

            train_losses.append(value)
            since_eval.append(value)
            if step % config.eval_interval == 0 or step == config.max_steps:
                evaluate(step, float(np.mean(since_eval)))
                since_eval = []

        if best_state is not None:
            self.model.params.load_state_dict(best_state)
        else:
            if not dev_documents:
                logger.warning(f"{self.name}: no dev set, keeping the final parameters")
            best_step = config.max_steps
            self._save("best")
        self._save("last")
        return TrainResult(
            model=self.model,
            history=history,
            train_losses=train_losses,
            best_step=best_step,
            best_dev_ppl=math.exp(best_loss) if best_state is not None else None,
        )


def train_ce(model: TransformerLM, train_documents: Documents, config: TrainConfig,
             dev_documents: Optional[Documents] = None, name: str = "train") -> TrainResult:
    """Minimise mean per-token cross-entropy; keeps the best-dev parameters."""

    def loss_fn(inputs, targets, rng):
        return model.loss(inputs, targets, training=True, rng=rng)

    return TrainingLoop(model, config, loss_fn, name=name).run(train_documents, dev_documents)


def train_kd(
    student: TransformerLM,
    teacher: Union[TransformerLM, str, Path],
    train_documents: Documents,
    kd_config: KDConfig,
    config: TrainConfig,
    dev_documents: Optional[Documents] = None,
    name: str = "distill",
) -> TrainResult:
    """Train a student on alpha*CE + (1-alpha)*T^2*KL against a frozen teacher.

    The teacher runs without dropout or gradient tracking; the student's
    dropout is replaced by ``kd_config.student_dropout_override``.

    Raises:
        VocabularyMismatchError: teacher and student vocabularies differ in size
    """
    if not isinstance(teacher, TransformerLM):
        teacher = load_checkpoint(teacher)
    if teacher.vocab_size != student.vocab_size:
        raise VocabularyMismatchError(
            f"teacher vocabulary ({teacher.vocab_size}) differs from student vocabulary ({student.vocab_size})"
        )
    if teacher.config.max_context < student.config.max_context:
        raise ValueError(
            f"teacher max_context {teacher.config.max_context} is shorter than the student's {student.config.max_context}"
        )
    student.set_dropout(kd_config.student_dropout_override)
    logger.info(
        f"Distilling: alpha={kd_config.alpha}, temperature={kd_config.temperature}, "
        f"student_dropout={kd_config.student_dropout_override}"
    )

    def loss_fn(inputs, targets, rng):
        with no_grad():
            teacher_lp = teacher.log_probs(inputs).values
        student_lp = student.log_probs(inputs, training=True, rng=rng)
        batch, length, vocab = student_lp.shape
        flat_student = apply("reshape", student_lp, shape=(batch * length, vocab))
        flat_teacher = teacher_lp.reshape(batch * length, vocab).astype(student.dtype)
        return kd_loss(flat_student, flat_teacher, targets.reshape(-1), kd_config, ignore_index=PAD_ID)

    return TrainingLoop(student, config, loss_fn, name=name).run(train_documents, dev_documents)


def pretrain_finetune(
    model_config: ModelConfig,
    general: TokenizedCorpus,
    target: TokenizedCorpus,
    pretrain_config: TrainConfig,
    finetune_config: TrainConfig,
    dtype=np.float32,
) -> PretrainFinetuneResult:
    """Pre-train on a general corpus, then fine-tune on the target domain.

    Phase 2 starts from phase 1's best-dev parameters with a fresh optimizer
    state. An empty general corpus reduces this to ``train_ce`` on the target.

    Raises:
        VocabularyMismatchError: the corpora or the model disagree on the vocabulary
    """
    if general.vocab_digest and target.vocab_digest and general.vocab_digest != target.vocab_digest:
        raise VocabularyMismatchError("general and target corpora were tokenized with different vocabularies")
    general.check_vocab(model_config.vocab_size)
    target.check_vocab(model_config.vocab_size)

    model = build_model(model_config, seed=derive_seed(pretrain_config.seed, "model.init"), dtype=dtype)
    pretrain_result = None
    before = None
    if general.train:
        if target.dev:
            before = math.exp(_evaluate(model, target.dev))
        pretrain_result = train_ce(model, general.train, pretrain_config, general.dev or None, name="pretrain")
    else:
        logger.info("General corpus is empty; skipping pre-training")

    finetune_result = train_ce(model, target.train, finetune_config, target.dev or None, name="finetune")
    return PretrainFinetuneResult(
        model=model,
        pretrain=pretrain_result,
        finetune=finetune_result,
        target_dev_ppl_before_pretraining=before,
    )
