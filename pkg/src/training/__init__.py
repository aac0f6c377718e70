from .config import TrainConfig, KDConfig
from .schedule import lr_at
from .data import TokenizedCorpus, pack_documents, document_windows, iterate_batches
from .distillation import kd_terms, kd_loss
from .trainer import (
    EvalRecord, TrainResult, PretrainFinetuneResult, TrainingLoop,
    train_ce, train_kd, pretrain_finetune,
)

__all__ = [
    'TrainConfig', 'KDConfig', 'lr_at',
    'TokenizedCorpus', 'pack_documents', 'document_windows', 'iterate_batches',
    'kd_terms', 'kd_loss',
    'EvalRecord', 'TrainResult', 'PretrainFinetuneResult', 'TrainingLoop',
    'train_ce', 'train_kd', 'pretrain_finetune',
]
