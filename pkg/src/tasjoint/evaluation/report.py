"""Comparison tables and figures across run directories."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLUMNS = ("run", "training", "frontend_finetuned", "backend_finetuned", "signal_loss",
           "cer", "wer", "sdr", "si_snr", "examples")


def read_jsonl(path):
    path = Path(path)
    if not path.exists():
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_run(run_dir):
    """Summary and training log of one run directory."""
    run_dir = Path(run_dir)
    summary_path = run_dir / "summary.json"
    if not summary_path.exists():
        raise FileNotFoundError(f"{run_dir}: no summary.json")
    summary = json.loads(summary_path.read_text())
    summary.setdefault("run", run_dir.name)
    return summary, read_jsonl(run_dir / "log.jsonl")


def table_rows(summaries):
    rows = []
    for s in summaries:
        m = s.get("metrics", {})
        rows.append({
            "run": s.get("label") or s["run"],
            "training": s.get("training", ""),
            "frontend_finetuned": s.get("frontend_finetuned", ""),
            "backend_finetuned": s.get("backend_finetuned", ""),
            "signal_loss": s.get("signal_loss", ""),
            **{k: m.get(k, math.nan) for k in ("cer", "wer", "sdr", "si_snr", "examples")},
        })
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def format_tsv(rows, columns=COLUMNS):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def plot_error_rates(rows, path):
    names = [r["run"] for r in rows]
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(max(4, 1.4 * len(rows)), 3.5))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [100 * r["wer"] for r in rows], width, label="WER")
    ax.bar([i + width / 2 for i in x], [100 * r["cer"] for r in rows], width, label="CER")
    ax.set_xticks(list(x), names, rotation=20, ha="right")
    ax.set_ylabel("error rate (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_signal_metrics(rows, path):
    names = [r["run"] for r in rows]
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(max(4, 1.4 * len(rows)), 3.5))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [r["sdr"] for r in rows], width, label="SDR")
    ax.bar([i + width / 2 for i in x], [r["si_snr"] for r in rows], width, label="SI-SNR")
    ax.set_xticks(list(x), names, rotation=20, ha="right")
    ax.set_ylabel("dB")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(logs, path):
    """One line per run of the logged total loss against step; ``logs`` maps name -> records."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    drawn = False
    for name, recs in logs.items():
        pts = [(r["step"], r.get("total", r.get("loss"))) for r in recs
               if "step" in r and r.get("total", r.get("loss")) is not None]
        if pts:
            ax.plot(*zip(*pts), label=name)
            drawn = True
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    if drawn:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(run_dirs, out_dir):
    """Write ``report.tsv``, ``report.jsonl`` and PNG figures under ``out_dir``."""
    if not run_dirs:
        raise ValueError("no run directories given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries, logs = [], {}
    for d in run_dirs:
        summary, log = load_run(d)
        summaries.append(summary)
        train_log = read_jsonl(Path(summary["trained_in"]) / "log.jsonl") if summary.get("trained_in") else log
        if train_log:
            logs[summary.get("label") or summary["run"]] = train_log
    rows = table_rows(summaries)
    tsv = format_tsv(rows)
    (out / "report.tsv").write_text(tsv)
    with open(out / "report.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    figures = [plot_error_rates(rows, out / "error_rates.png"),
               plot_signal_metrics(rows, out / "signal_metrics.png"),
               plot_training_curves(logs, out / "training_curves.png")]
    return tsv, figures
