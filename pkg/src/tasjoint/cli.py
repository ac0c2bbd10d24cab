"""``tasjoint`` command line: data generation, training, evaluation, gradient checks, reports."""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import pipeline
from .autograd.checkpoint import CheckpointError
from .config import ConfigError, ExperimentConfig
from .dataio import WavError
from .dataio.manifest import ManifestError
from .nn import IncompatibleCheckpointError

EXPECTED_ERRORS = (ConfigError, CheckpointError, IncompatibleCheckpointError, ManifestError, WavError,
                   FileNotFoundError, ValueError, KeyError)


def structured_errors(fn):
    """Report expected failures as one JSON line on stderr and exit with status 2."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EXPECTED_ERRORS as exc:
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc).strip("'\"")}), err=True)
            sys.exit(2)
    return wrapper


def _config(path):
    return ExperimentConfig.load(path) if path else ExperimentConfig.from_dict({})


def _data_dir(cfg, data):
    d = Path(data or cfg.paths.data_dir or "")
    if not str(data or cfg.paths.data_dir):
        raise ConfigError("no data directory: pass --data or set [paths] data_dir")
    cfg.paths.data_dir = str(d.resolve())
    return d


def _progress(every):
    def echo(rec):
        if every and rec.get("step", 0) % every == 0 and "phase" in rec:
            fields = {k: rec[k] for k in ("phase", "step", "loss", "total", "dev_wer") if k in rec}
            click.echo(json.dumps(fields), err=True)
    return echo


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                             help="Experiment TOML file (defaults are used when omitted).")
data_option = click.option("--data", type=click.Path(file_okay=False), help="Corpus directory from datagen.")


@click.group()
@click.option("--workdir", envvar="TASJOINT_WORKDIR", type=click.Path(file_okay=False),
              help="Parent of run directories [env TASJOINT_WORKDIR; else [paths] work_dir; else ./runs].")
@click.pass_context
def main(ctx, workdir):
    """Joint separation and recognition of two-speaker mixtures."""
    ctx.obj = {"workdir": workdir}


def _workdir(ctx, cfg=None):
    return Path(ctx.obj["workdir"] or (cfg.paths.work_dir if cfg else "") or "runs")


@main.command()
@config_option
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output corpus directory.")
@structured_errors
def datagen(config_path, out):
    """Render the synthetic two-speaker corpus and its manifests."""
    cfg = _config(config_path)
    manifests = pipeline.datagen(cfg, out)
    click.echo("manifest\tpath\trecords")
    for name, path in manifests.items():
        n = sum(1 for line in open(path) if line.strip())
        click.echo(f"{name}\t{path}\t{n}")


@main.command("train-separator")
@config_option
@data_option
@click.option("--steps", type=int, help="Override [train_separator] steps.")
@click.option("--progress", type=int, default=50, show_default=True, help="Echo every N steps (0: quiet).")
@click.pass_context
@structured_errors
def train_separator(ctx, config_path, data, steps, progress):
    """Pre-train the separator with PIT SI-SNR on the min-length mixtures."""
    cfg = _config(config_path)
    data_dir = _data_dir(cfg, data)
    if steps is not None:
        cfg.train_separator.steps = steps
    run = pipeline.RunDir.create(_workdir(ctx, cfg), "train-separator")
    summary = pipeline.train_separator(cfg, data_dir, run, _progress(progress))
    click.echo("run\tcheckpoint\tdev_si_snr\tdev_si_snri")
    click.echo(f"{run.path}\t{summary['checkpoint']}\t{summary['dev']['si_snr']:.4f}\t{summary['dev']['si_snri']:.4f}")


@main.command("train-asr")
@config_option
@data_option
@click.option("--epochs", type=int, help="Override [train_asr] epochs.")
@click.option("--progress", type=int, default=50, show_default=True, help="Echo every N steps (0: quiet).")
@click.pass_context
@structured_errors
def train_asr(ctx, config_path, data, epochs, progress):
    """Pre-train the recognizer on clean single-speaker utterances."""
    cfg = _config(config_path)
    data_dir = _data_dir(cfg, data)
    if epochs is not None:
        cfg.train_asr.epochs = epochs
    run = pipeline.RunDir.create(_workdir(ctx, cfg), "train-asr")
    summary = pipeline.train_asr(cfg, data_dir, run, _progress(progress))
    click.echo("run\tcheckpoint\tdev_wer")
    click.echo(f"{run.path}\t{summary['checkpoint']}\t{summary['dev_wer']}")


def _chunk(value):
    if value is None or value.lower() == "off":
        return None
    try:
        return int(value)
    except ValueError:
        raise click.BadParameter(f"expected a sample count or 'off', got {value!r}") from None


@main.command()
@config_option
@data_option
@click.option("--checkpoint-fe", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint-asr", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["a", "b", "c"]), help="a: recognizer only, b: separator only, c: both.")
@click.option("--tbptt-chunk", help="Differentiable chunk length in samples, or 'off'.")
@click.option("--perm", type=click.Choice(["sig", "ctc"]), help="Transcript assignment criterion.")
@click.option("--alpha", type=float, help="Override the signal-loss weight of the mode.")
@click.option("--beta", type=float, help="Override the recognition-loss weight of the mode.")
@click.option("--steps", type=int, help="Stop after this many updates.")
@click.option("--epochs", type=int)
@click.option("--progress", type=int, default=25, show_default=True, help="Echo every N steps (0: quiet).")
@click.pass_context
@structured_errors
def finetune(ctx, config_path, data, checkpoint_fe, checkpoint_asr, mode, tbptt_chunk, perm, alpha, beta,
             steps, epochs, progress):
    """Fine-tune the separator/recognizer pair on the max-length mixtures."""
    cfg = _config(config_path)
    data_dir = _data_dir(cfg, data)
    plan = cfg.plan
    for name, value in (("mode", mode), ("perm", perm), ("alpha", alpha), ("beta", beta),
                        ("max_steps", steps), ("epochs", epochs)):
        if value is not None:
            setattr(plan, name, value)
    if tbptt_chunk is not None:
        plan.tbptt_chunk = _chunk(tbptt_chunk)
    run = pipeline.RunDir.create(_workdir(ctx, cfg), f"finetune-{plan.mode}")
    summary = pipeline.finetune_models(cfg, data_dir, checkpoint_fe, checkpoint_asr, run, _progress(progress))
    click.echo("run\tmode\talpha\tbeta\tseparator\tasr")
    click.echo("\t".join([str(run.path), summary["mode"], str(summary["alpha"]), str(summary["beta"]),
                          *summary["checkpoints"]]))


@main.command("evaluate")
@click.option("--checkpoint-fe", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint-asr", type=click.Path(exists=True, dir_okay=False))
@click.option("--data", type=click.Path(exists=True), help="Corpus directory or a mixture manifest.")
@click.option("--split", default="test", show_default=True, help="Split used when --data is a directory.")
@click.option("--run", "from_run", type=click.Path(exists=True, file_okay=False),
              help="Evaluate the checkpoints and data recorded in a fine-tuning run directory.")
@click.option("--oracle", is_flag=True, help="Recognize the reference sources instead of the separator output.")
@click.option("--label", help="Row label in reports.")
@click.option("--precision", type=click.Choice(["float32", "float64"]), default="float64", show_default=True)
@click.pass_context
@structured_errors
def evaluate_cmd(ctx, checkpoint_fe, checkpoint_asr, data, split, from_run, oracle, label, precision):
    """Full-utterance WER/CER and SDR/SI-SNR on a max-length mixture set."""
    if from_run:
        run_path = Path(from_run)
        cfg = ExperimentConfig.load(run_path / "config.toml")
        checkpoint_fe = checkpoint_fe or run_path / "separator.ckpt"
        checkpoint_asr = checkpoint_asr or run_path / "asr.ckpt"
        data = data or cfg.paths.data_dir
    if not (checkpoint_fe and checkpoint_asr and data):
        raise ConfigError("need --checkpoint-fe, --checkpoint-asr and --data (or --run)")
    data = Path(data)
    manifest = data if data.is_file() else pipeline.manifest(data, f"{split}_max")
    run = pipeline.RunDir.create(_workdir(ctx, cfg if from_run else None), "evaluate")
    s = pipeline.evaluate_models(checkpoint_fe, checkpoint_asr, manifest, run, precision, oracle, label)
    m = s["metrics"]
    click.echo("run\tlabel\texamples\tfailed\twer\tcer\tsdr\tsi_snr\tsi_snri")
    click.echo(f"{run.path}\t{s['label']}\t{m['examples']}\t{m['failed']}\t{m['wer']:.4f}\t{m['cer']:.4f}"
               f"\t{m['sdr']:.4f}\t{m['si_snr']:.4f}\t{m['si_snri']:.4f}")


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
def gradcheck(seed):
    """Finite-difference check of every differentiable op; exits 1 on any failure."""
    from .diagnostics import run_gradcheck_suite
    results = run_gradcheck_suite(seed)
    click.echo("check\trel_error\ttolerance\tstatus")
    for r in results:
        click.echo(f"{r.name}\t{r.error:.3e}\t{r.tolerance:.0e}\t{'PASS' if r.passed else 'FAIL'}")
    failed = [r for r in results if not r.passed]
    click.echo(f"# {len(results) - len(failed)}/{len(results)} checks passed", err=True)
    sys.exit(1 if failed else 0)


@main.command()
@click.option("--runs", "runs", required=True, multiple=True, type=click.Path(exists=True, file_okay=False),
              help="Evaluation run directory; repeat for each row.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (default: a new run directory).")
@click.pass_context
@structured_errors
def report(ctx, runs, out):
    """Comparison table (TSV on stdout) and figures across evaluation runs."""
    from .evaluation.report import write_report
    out = Path(out) if out else pipeline.RunDir.create(_workdir(ctx), "report").path
    tsv, figures = write_report(runs, out)
    click.echo(tsv, nl=False)
    for f in figures:
        click.echo(f"# figure\t{f}", err=True)


if __name__ == "__main__":
    main()
