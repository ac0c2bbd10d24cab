"""Run-directory workflows shared by the command line and the acceptance suite."""
from __future__ import annotations

import json
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from .autograd.checkpoint import load_checkpoint
from .backend.model import AsrConfig, AsrModel
from .dataio import generate_toneword_corpus, load_mixtures, load_utterances
from .evaluation import evaluate
from .frontend import ConvTasNet, SeparatorConfig
from .trainer import finetune, pretrain_asr, pretrain_separator, separator_dev_metrics

DTYPES = {"float32": np.float32, "float64": np.float64}
SEPARATOR_DEV_SUBSET = 10


class RunDir:
    """A timestamped, self-contained output directory."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    @classmethod
    def create(cls, work_dir, name):
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        return cls(Path(work_dir) / f"{name}-{stamp}")

    def write_config(self, config):
        config.write(self.path / "config.toml")

    def logger(self, echo=None):
        path = self.path / "log.jsonl"

        def log(record):
            with open(path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            if echo is not None:
                echo(record)
        return log

    def write_summary(self, summary):
        summary = {"run": self.path.name, **summary}
        (self.path / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return summary


def _meta(path):
    _, meta, _ = load_checkpoint(path)
    return meta


def load_separator(path, dtype=None):
    meta = _meta(path)
    if meta.get("kind") != "separator":
        raise ValueError(f"{path}: not a separator checkpoint (kind={meta.get('kind')!r})")
    model = ConvTasNet(SeparatorConfig(**meta["config"]), dtype=dtype or np.float64)
    model.load(path)
    return model, meta


def load_asr(path, dtype=None):
    meta = _meta(path)
    if meta.get("kind") != "asr":
        raise ValueError(f"{path}: not a recognizer checkpoint (kind={meta.get('kind')!r})")
    model = AsrModel(AsrConfig(**meta["config"]), dtype=dtype or np.float64)
    model.load(path)
    return model, meta


def manifest(data_dir, name):
    path = Path(data_dir) / f"{name}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"manifest {path} not found; run datagen first")
    return path


def datagen(config, out_dir):
    return generate_toneword_corpus(config.corpus, out_dir)


def train_separator(config, data_dir, run, echo=None):
    dtype = DTYPES[config.precision]
    run.write_config(config)
    model = ConvTasNet(config.separator, seed=config.seed, dtype=dtype)
    train = load_mixtures(manifest(data_dir, "train_min"))
    dev = load_mixtures(manifest(data_dir, "dev_min"))
    t0 = time.perf_counter()
    pretrain_separator(model, train, config.train_separator, dev[:SEPARATOR_DEV_SUBSET], run.logger(echo),
                       checkpoint_dir=run.path)
    metrics = separator_dev_metrics(model, dev)
    return run.write_summary({"stage": "train-separator", "checkpoint": str(run.path / "separator.ckpt"),
                              "dev": metrics, "seconds": time.perf_counter() - t0})


def train_asr(config, data_dir, run, echo=None):
    dtype = DTYPES[config.precision]
    run.write_config(config)
    model = AsrModel(config.asr, seed=config.seed, dtype=dtype)
    train = load_utterances(manifest(data_dir, "train_clean"))
    dev = load_utterances(manifest(data_dir, "dev_clean"))
    t0 = time.perf_counter()
    hist = pretrain_asr(model, train, config.train_asr, dev, run.logger(echo), checkpoint_dir=run.path)
    dev_wer = [r["dev_wer"] for r in hist if "dev_wer" in r]
    return run.write_summary({"stage": "train-asr", "checkpoint": str(run.path / "asr.ckpt"),
                              "dev_wer": dev_wer[-1] if dev_wer else None,
                              "seconds": time.perf_counter() - t0})


def finetune_models(config, data_dir, separator_ckpt, asr_ckpt, run, echo=None):
    dtype = DTYPES[config.precision]
    plan = config.plan.validate()
    config.paths.separator_checkpoint = str(separator_ckpt)
    config.paths.asr_checkpoint = str(asr_ckpt)
    run.write_config(config)
    sep, _ = load_separator(separator_ckpt, dtype)
    asr, _ = load_asr(asr_ckpt, dtype)
    if plan.tbptt_chunk is not None and plan.tbptt_chunk < sep.config.L:
        raise ValueError(f"tbptt chunk {plan.tbptt_chunk} is shorter than the encoder window L = {sep.config.L}")
    train = load_mixtures(manifest(data_dir, "train_max"))
    t0 = time.perf_counter()
    finetune(sep, asr, train, plan, run.logger(echo))
    alpha, beta = plan.weights()
    fe, be = plan.trainable()
    info = {"mode": plan.mode, "alpha": alpha, "beta": beta, "frontend_finetuned": fe,
            "backend_finetuned": be, "trained_in": str(run.path)}
    sep.save(run.path / "separator.ckpt", meta={"finetune": info})
    asr.save(run.path / "asr.ckpt", meta={"finetune": info})
    return run.write_summary({"stage": "finetune", **info, "seconds": time.perf_counter() - t0,
                              "checkpoints": [str(run.path / "separator.ckpt"), str(run.path / "asr.ckpt")]})


def evaluate_models(separator_ckpt, asr_ckpt, manifest_path, run, precision="float64", oracle=False, label=None):
    dtype = DTYPES[precision]
    sep, sep_meta = load_separator(separator_ckpt, dtype)
    asr, _ = load_asr(asr_ckpt, dtype)
    data = load_mixtures(manifest_path)
    report = evaluate(sep, asr, data, oracle=oracle)
    with open(run.path / "examples.jsonl", "w") as fh:
        for ex in report.examples:
            fh.write(json.dumps(ex.to_record(), sort_keys=True) + "\n")
        for err in report.errors:
            fh.write(json.dumps(err, sort_keys=True) + "\n")
    ft = sep_meta.get("finetune")
    training = "oracle" if oracle else (f"finetune-{ft['mode']}" if ft else "cascade")
    return run.write_summary({
        "stage": "evaluate",
        "label": label or training,
        "training": training,
        "frontend_finetuned": bool(ft and ft["frontend_finetuned"]),
        "backend_finetuned": bool(ft and ft["backend_finetuned"]),
        "signal_loss": bool(ft and ft["alpha"] > 0),
        "trained_in": ft["trained_in"] if ft else None,
        "checkpoints": {"separator": str(separator_ckpt), "asr": str(asr_ckpt)},
        "data": str(manifest_path),
        "metrics": report.summary(),
        "errors": report.errors,
    })
