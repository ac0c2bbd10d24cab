import json
import math

import numpy as np
import pytest

from tasjoint.backend import AsrConfig, AsrModel
from tasjoint.dataio import load_mixtures
from tasjoint.evaluation import (MetricsReport, evaluate, format_tsv, min_perm_counts, table_rows,
                                 write_report)
from tasjoint.evaluation.report import COLUMNS
from tasjoint.frontend import ConvTasNet, SeparatorConfig

SEP = SeparatorConfig(N=16, L=16, B=8, H=16, P=3, X=3, R=1)
ASR = AsrConfig(n_mels=16, conv_channels=(16,), rnn_hidden=16, enc_dim=16, emb_dim=8, dec_hidden=16, att_dim=16)


@pytest.fixture(scope="module")
def models():
    return ConvTasNet(SEP, seed=0), AsrModel(ASR, seed=0)


@pytest.fixture(scope="module")
def test_set(small_corpus):
    return load_mixtures(small_corpus[2]["test_max"])


def test_oracle_separation_reaches_ceiling_and_backend_wer(models, test_set):
    sep, asr = models
    report = evaluate(sep, asr, test_set, oracle=True)
    assert report.count == len(test_set) and not report.errors
    assert all(e.si_snr == 60.0 and e.sdr == 60.0 for e in report.examples)
    errs = words = 0
    for ex in test_set:
        counts, _ = min_perm_counts([asr.recognize(s.samples) for s in ex.sources], ex.transcripts)
        errs, words = errs + counts.errors, words + counts.ref_len
    assert report.wer == errs / words


def test_aggregates_are_micro_averages(models, test_set):
    report = evaluate(*models, test_set)
    ex = report.examples
    assert report.wer == sum(e.word_errors for e in ex) / sum(e.words for e in ex)
    assert report.summary()["si_snr"] == pytest.approx(np.mean([e.si_snr for e in ex]))
    shuffled = MetricsReport(list(reversed(ex)))
    assert shuffled.wer == report.wer and shuffled.cer == report.cer


def test_evaluation_is_reproducible(models, test_set):
    a = evaluate(*models, test_set).summary()
    b = evaluate(*models, test_set).summary()
    assert json.dumps(a) == json.dumps(b)


def test_empty_set_rejected(models):
    with pytest.raises(ValueError):
        evaluate(*models, [])


def test_per_example_failures_are_collected(models, test_set):
    ex = test_set[0]
    short = [type(s)(s.samples[:-5], s.sample_rate) for s in ex.sources]
    bad = type(ex)(ex.mixture, short, ex.transcripts, id="short-refs")
    report = evaluate(*models, [bad, test_set[1]])
    assert report.count == 1 and report.errors[0]["id"] == "short-refs"
    assert "ShapeError" in report.errors[0]["error"]


def test_empty_report_is_nan():
    assert math.isnan(MetricsReport().wer)


def _fake_run(root, name, label, wer):
    d = root / name
    d.mkdir()
    summary = {"run": name, "label": label, "training": label, "frontend_finetuned": False,
               "backend_finetuned": True, "signal_loss": False,
               "metrics": {"wer": wer, "cer": wer / 2, "sdr": 10.0, "si_snr": 9.5, "examples": 3}}
    (d / "summary.json").write_text(json.dumps(summary))
    (d / "log.jsonl").write_text("".join(json.dumps({"phase": "finetune-a", "step": i, "total": 5.0 - i}) + "\n"
                                         for i in range(1, 4)))
    return d


def test_report_table_and_figures(tmp_path):
    runs = [_fake_run(tmp_path, "r1", "cascade", 0.25), _fake_run(tmp_path, "r2", "finetune-a", 0.125)]
    tsv, figures = write_report(runs, tmp_path / "out")
    lines = tsv.strip().split("\n")
    assert lines[0].split("\t") == list(COLUMNS)
    assert lines[2].split("\t")[COLUMNS.index("wer")] == "0.1250"
    for f in figures:
        assert f.exists() and f.read_bytes()[:4] == b"\x89PNG"
    assert (tmp_path / "out" / "report.tsv").read_text() == tsv
    assert len((tmp_path / "out" / "report.jsonl").read_text().splitlines()) == 2


def test_report_needs_runs(tmp_path):
    with pytest.raises(ValueError):
        write_report([], tmp_path)
    with pytest.raises(FileNotFoundError):
        write_report([tmp_path], tmp_path / "o")


def test_tsv_formatting():
    rows = table_rows([{"run": "x", "metrics": {"wer": 0.5}}])
    out = format_tsv(rows)
    assert out.splitlines()[1].split("\t")[COLUMNS.index("cer")] == "nan"
