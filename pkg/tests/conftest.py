"""Shared fixtures: the pinned desk-scale experiment used by the acceptance tests.

The toy pipeline (400/100/200 one-second utterances at 8 kHz, three
resolutions, slim backend, 4 epochs) runs exactly twice per session: the
first pass feeds the end-to-end quality checks, the second exists only to
prove byte-level determinism against the first.
"""

from __future__ import annotations

import time
from pathlib import Path

import pytest

from multires import pipeline
from multires.config import parse_config

TOY_SETTINGS = """
corpus.n_train = 400
corpus.n_dev = 100
corpus.n_eval = 200
corpus.duration_s = 1.0
corpus.sample_rate = 8000
corpus.spoof_synthesis = 256/64
corpus.seed = 2
features.resolutions = 128/32,256/64,512/128
alignment.target = 128x129
train.epochs = 4
train.batch_size = 8
train.seed = 2
train.warmup_steps = 200
train.target_duration_s = 1.0
train.dtype = float32
backend.stem_channels = 8
backend.stages = 3
backend.blocks_per_stage = 1
backend.se_reduction = 4
"""


def toy_config(root: Path):
    text = TOY_SETTINGS + (
        f"paths.corpus_dir = {root / 'corpus'}\n"
        f"paths.cache_dir = {root / 'cache'}\n"
        f"paths.checkpoint_dir = {root / 'ckpt'}\n"
    )
    return parse_config(text, source="<toy>")


def run_toy_pipeline(root: Path) -> dict:
    """gen-data -> extract -> train -> eval -> prune/retrain -> eval refined."""
    config = toy_config(root)
    start = time.monotonic()
    pipeline.run_gen_data(config)
    pipeline.run_extract(config)
    train_result, ckpt = pipeline.run_train(config)
    eval_report = pipeline.run_eval(config, ckpt)
    prune_result, refined_result, refined_ckpt = pipeline.run_prune(config, ckpt)
    refined_report = pipeline.run_eval(config, refined_ckpt)
    elapsed = time.monotonic() - start
    return {
        "root": root,
        "config": config,
        "elapsed_s": elapsed,
        "train_result": train_result,
        "checkpoint": ckpt,
        "eval_report": eval_report,
        "prune_result": prune_result,
        "refined_result": refined_result,
        "refined_checkpoint": refined_ckpt,
        "refined_report": refined_report,
    }


@pytest.fixture(scope="session")
def toy_runs(tmp_path_factory):
    first = run_toy_pipeline(tmp_path_factory.mktemp("toy_a"))
    second = run_toy_pipeline(tmp_path_factory.mktemp("toy_b"))
    return first, second
