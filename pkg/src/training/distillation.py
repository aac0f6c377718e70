from typing import Optional, Tuple, Union

import numpy as np

from ..exceptions import VocabularyMismatchError
from ..tensor import Tensor, apply
from .config import KDConfig

ArrayOrTensor = Union[np.ndarray, Tensor]


def _as_tensor(x: ArrayOrTensor) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def kd_terms(
    student_log_probs: ArrayOrTensor,
    teacher_log_probs: ArrayOrTensor,
    gold: np.ndarray,
    config: KDConfig,
    ignore_index: Optional[int] = None,
) -> Tuple[Tensor, Tensor]:
    """Hard-label CE and temperature-scaled KL(teacher_T || student_T) as separate scalars.

    Both inputs are (N, V) log-probability rows. The KL term is already
    multiplied by T**2.
    """
    student = _as_tensor(student_log_probs)
    teacher = _as_tensor(teacher_log_probs)
    if student.shape[-1] != teacher.shape[-1]:
        raise VocabularyMismatchError(
            f"student predicts {student.shape[-1]} units, teacher predicts {teacher.shape[-1]}"
        )
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    if ignore_index is not None:
        rows = np.flatnonzero(gold != ignore_index)
        student = apply("slice", student, index=rows)
        teacher = apply("slice", teacher, index=rows)
        gold = gold[rows]

    ce = apply("cross_entropy", student, targets=gold)

    temperature = config.temperature
    if temperature != 1.0:
        student_t = apply("log_softmax", apply("scale", student, factor=1.0 / temperature), axis=-1)
        teacher_t = apply("log_softmax", apply("scale", teacher, factor=1.0 / temperature), axis=-1)
    else:
        student_t, teacher_t = student, teacher
    kl = apply("kl_divergence", teacher_t, student_t)
    return ce, apply("scale", kl, factor=temperature ** 2)


def kd_loss(
    student_log_probs: ArrayOrTensor,
    teacher_log_probs: ArrayOrTensor,
    gold: np.ndarray,
    config: KDConfig,
    ignore_index: Optional[int] = None,
) -> Tensor:
    """alpha * CE(student, gold) + (1 - alpha) * T^2 * KL(teacher_T || student_T)."""
    ce, kl = kd_terms(student_log_probs, teacher_log_probs, gold, config, ignore_index)
    return apply(
        "add",
        apply("scale", ce, factor=config.alpha),
        apply("scale", kl, factor=1.0 - config.alpha),
    )
