import os
from dotenv import load_dotenv

load_dotenv()
os.environ.setdefault('OMP_NUM_THREADS', os.getenv('LMR_NUM_THREADS', '1'))

import argparse
import json
from pathlib import Path

from src.cli.pipeline import PipelineSettings, run_synthetic_pipeline
from src.utils.logger import logger


def main():
    """Synthetic end-to-end run: corpus, tokenizer, teacher, distilled student, n-best rescoring"""
    parser = argparse.ArgumentParser(description='run the synthetic rescoring pipeline')
    parser.add_argument('workdir', type=Path, help='directory for corpora, checkpoints and n-best files')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--train-steps', type=int, default=600)
    parser.add_argument('--train-lines', type=int, default=4000)
    args = parser.parse_args()

    settings = PipelineSettings(seed=args.seed, train_steps=args.train_steps, train_lines=args.train_lines)
    logger.info(f"Running synthetic pipeline in {args.workdir}")
    summary = run_synthetic_pipeline(args.workdir, settings)

    print(summary['table'])
    (args.workdir / 'summary.json').write_text(
        json.dumps({k: v for k, v in summary.items() if k != 'table'}, indent=2) + '\n', encoding='utf-8'
    )


if __name__ == "__main__":
    main()
