import os
from dotenv import load_dotenv

# BLAS thread budget must be pinned before numpy is imported
load_dotenv()
_threads = os.getenv('LMR_NUM_THREADS', '1')
os.environ.setdefault('OMP_NUM_THREADS', _threads)
os.environ.setdefault('MKL_NUM_THREADS', _threads)
os.environ.setdefault('OPENBLAS_NUM_THREADS', _threads)

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from src.cli.commands import COMMANDS, overrides_from_args
from src.config import load_experiment_config
from src.evaluation.report import to_jsonable, write_json
from src.exceptions import ConfigError, RescoreToolkitError
from src.utils.logger import logger

EXIT_ERROR = 2


class JsonErrorParser(argparse.ArgumentParser):
    """Usage errors surface as ConfigError so the caller reports them as one JSON line."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _comma_floats(text: str) -> List[float]:
    return [float(x) for x in text.split(',') if x.strip()]


def _add_tokenizer(parser):
    parser.add_argument('--tokenizer', dest='tokenizer.output_dir', type=Path, help='tokenizer directory')
    parser.add_argument('--lowercase', dest='tokenizer.lowercase', action='store_const', const=True)


def _add_model(parser):
    parser.add_argument('--preset', dest='model.preset', choices=['large', 'small-one', 'small-two'])
    parser.add_argument('--n-layers', dest='model.n_layers', type=int)
    parser.add_argument('--n-heads', dest='model.n_heads', type=int)
    parser.add_argument('--d-embed', dest='model.d_embed', type=int)
    parser.add_argument('--d-hidden', dest='model.d_hidden', type=int)
    parser.add_argument('--d-ffn', dest='model.d_ffn', type=int)
    parser.add_argument('--max-context', dest='model.max_context', type=int)
    parser.add_argument('--dropout', dest='model.dropout', type=float)
    parser.add_argument('--softmax', dest='model.softmax_mode', choices=['full', 'adaptive'])
    parser.add_argument('--tie-embeddings', dest='model.tie_embeddings', action='store_const', const=True)


def _add_training(parser):
    parser.add_argument('--corpus', dest='training.corpus', type=Path, help='training text, one document per line')
    parser.add_argument('--dev-corpus', dest='training.dev_corpus', type=Path)
    parser.add_argument('--max-steps', dest='training.train.max_steps', type=int)
    parser.add_argument('--batch-size', dest='training.train.batch_size', type=int)
    parser.add_argument('--lr', dest='training.train.learning_rate', type=float)
    parser.add_argument('--warmup-steps', dest='training.train.warmup_steps', type=int)
    parser.add_argument('--eval-interval', dest='training.train.eval_interval', type=int)
    parser.add_argument('--clip-norm', dest='training.train.clip_norm', type=float)
    parser.add_argument('--checkpoint-dir', dest='training.train.checkpoint_dir', type=Path)
    parser.add_argument('--log-path', dest='training.train.log_path', type=Path)
    parser.add_argument('--model-out', dest='training.model_out', type=Path)


def _add_nbest_in(parser):
    parser.add_argument('--nbest-in', dest='rescoring.nbest_in', type=Path)
    parser.add_argument('--scores-are-costs', dest='rescoring.scores_are_costs', action='store_const', const=True,
                        help='input am/ngram values are negated log-scores')
    parser.add_argument('--n-max', dest='rescoring.n_max', type=int)


def _add_synthetic(parser):
    parser.add_argument('--order', type=int, default=2)
    parser.add_argument('--vocab', type=int, default=50)
    parser.add_argument('--length', type=int, default=20, help='words per line')
    parser.add_argument('--sharpness', type=float, default=2.0)
    parser.add_argument('--shift', type=float, default=0.0, help='blend the source with fresh noise (second domain)')


def build_parser() -> argparse.ArgumentParser:
    parser = JsonErrorParser(description='Compact Transformer LMs for n-best rescoring')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help='JSON experiment config')
    common.add_argument('--seed', dest='seed', type=int)
    common.add_argument('--out', dest='evaluation.out', type=Path, help='write the JSON result here')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('bpe-train', parents=[common], help='learn a BPE merge table and vocabulary')
    p.add_argument('--corpus', dest='tokenizer.corpus', type=Path)
    p.add_argument('--vocab-size', dest='tokenizer.vocab_size', type=int)
    p.add_argument('--out-dir', dest='tokenizer.output_dir', type=Path)
    p.add_argument('--lowercase', dest='tokenizer.lowercase', action='store_const', const=True)

    p = sub.add_parser('lm-train', parents=[common], help='train a language model with cross-entropy')
    _add_tokenizer(p)
    _add_model(p)
    _add_training(p)

    p = sub.add_parser('lm-pretrain-finetune', parents=[common], help='pre-train on general text, then fine-tune')
    _add_tokenizer(p)
    _add_model(p)
    _add_training(p)
    p.add_argument('--general-corpus', dest='training.pretrain_corpus', type=Path)
    p.add_argument('--general-dev', dest='training.pretrain_dev_corpus', type=Path)
    p.add_argument('--pretrain-steps', dest='training.pretrain_steps', type=int,
                   help='pre-training budget; other settings follow the training flags')

    p = sub.add_parser('distill', parents=[common], help='train a student against a frozen teacher')
    _add_tokenizer(p)
    _add_model(p)
    _add_training(p)
    p.add_argument('--teacher', dest='training.teacher_checkpoint', type=Path)
    p.add_argument('--kd-alpha', dest='training.kd.alpha', type=float)
    p.add_argument('--temperature', dest='training.kd.temperature', type=float)

    p = sub.add_parser('rescore', parents=[common], help='add neural LM scores and re-rank n-best lists')
    _add_tokenizer(p)
    _add_nbest_in(p)
    p.add_argument('--model', dest='rescoring.model', type=Path)
    p.add_argument('--nbest-out', dest='rescoring.nbest_out', type=Path)
    p.add_argument('--dev-nbest', dest='rescoring.dev_nbest', type=Path)
    p.add_argument('--alpha', dest='rescoring.alpha', type=float)
    p.add_argument('--tune-grid', dest='rescoring.tune_grid', type=_comma_floats, help='comma-separated alphas')
    p.add_argument('--workers', dest='rescoring.workers', type=int)

    p = sub.add_parser('eval-wer', parents=[common], help='word error rates of n-best selections or text files')
    _add_nbest_in(p)
    p.add_argument('--ref', type=Path)
    p.add_argument('--hyp', type=Path)
    p.add_argument('--ignore-case', dest='evaluation.lowercase', action='store_const', const=True)

    p = sub.add_parser('eval-ppl', parents=[common], help='perplexity of one or more models on a corpus')
    _add_tokenizer(p)
    p.add_argument('--model', dest='evaluation.models', type=Path, nargs='+')
    p.add_argument('--corpus', dest='evaluation.corpus', type=Path)

    p = sub.add_parser('bench', parents=[common], help='scoring latency of one or two models')
    _add_tokenizer(p)
    _add_nbest_in(p)
    p.add_argument('--model', dest='evaluation.models', type=Path, nargs='+')
    p.add_argument('--corpus', dest='evaluation.corpus', type=Path)
    p.add_argument('--candidates', dest='evaluation.bench_candidates', type=int)
    p.add_argument('--repetitions', dest='evaluation.repetitions', type=int)

    p = sub.add_parser('synth-gen', parents=[common], help='sample a corpus from a synthetic Markov source')
    _add_synthetic(p)
    p.add_argument('--lines', type=int, required=True)
    p.add_argument('--dev-lines', type=int, default=0)
    p.add_argument('--text-out', type=Path, required=True)
    p.add_argument('--dev-out', type=Path)

    p = sub.add_parser('synth-nbest', parents=[common], help='build a synthetic n-best file with known references')
    _add_synthetic(p)
    p.add_argument('--records', type=int, default=200)
    p.add_argument('--n', type=int, default=10)
    p.add_argument('--sub-rate', type=float, default=0.1)
    p.add_argument('--ins-rate', type=float, default=0.03)
    p.add_argument('--del-rate', type=float, default=0.03)
    p.add_argument('--ngram-lines', type=int, default=200)
    p.add_argument('--am-noise', type=float, default=2.0)
    p.add_argument('--split', default='test', help='names the seed stream, e.g. dev or test')
    p.add_argument('--nbest-out', type=Path, required=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; JSON result on stdout (or --out), errors as one JSON line on stderr"""
    try:
        args = build_parser().parse_args(argv)
        config = load_experiment_config(args.config, overrides_from_args(args))
        logger.info(f"Running {args.command}: seed={config.seed}")
        result = COMMANDS[args.command](args, config)
        result = {'command': args.command, **to_jsonable(result)}
        text = write_json(result, config.evaluation.out)
        if config.evaluation.out is None:
            print(text)
        else:
            logger.info(f"Result written to {config.evaluation.out}")
    except (RescoreToolkitError, ValidationError, ValueError, OSError) as e:
        record = {'error': type(e).__name__, 'message': ' '.join(str(e).split())}
        print(json.dumps(record), file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
