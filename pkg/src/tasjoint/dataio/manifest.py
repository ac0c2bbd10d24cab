"""JSON-lines manifests and the datasets they describe."""
from __future__ import annotations

import json
from pathlib import Path

from .wav import MixtureExample, Waveform, read_wav


class ManifestError(ValueError):
    pass


def read_manifest(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return records


def _load(root, rel, expected_len=None):
    wav = read_wav(root / rel)
    if expected_len is not None and len(wav) != expected_len:
        raise ManifestError(f"{rel}: {len(wav)} samples, manifest says {expected_len}")
    return wav


def load_mixtures(path):
    """Load every mixture record of a manifest as a :class:`MixtureExample`."""
    path = Path(path)
    root = path.parent
    out = []
    for r in read_manifest(path):
        lengths = r.get("lengths", {})
        src_lens = lengths.get("sources", [None] * len(r["sources"]))
        out.append(MixtureExample(
            mixture=_load(root, r["mixture"], lengths.get("mixture")),
            sources=[_load(root, p, n) for p, n in zip(r["sources"], src_lens)],
            transcripts=[list(t) for t in r["transcripts"]],
            id=r["id"],
            mix_snr_db=float(r.get("snr_db", 0.0)),
            meta={"variant": r.get("variant"), "speakers": r.get("speakers")},
        ))
    return out


def load_utterances(path):
    """Load a clean single-speaker manifest as ``[(id, Waveform, tokens), ...]``."""
    path = Path(path)
    return [(r["id"], _load(path.parent, r["audio"], r.get("length")), list(r["transcript"]))
            for r in read_manifest(path)]


def check_manifest(path):
    """Verify every referenced file exists with the recorded sample count."""
    path = Path(path)
    recs = read_manifest(path)
    for r in recs:
        if "mixture" in r:
            files = [(r["mixture"], r["lengths"]["mixture"])]
            files += list(zip(r["sources"], r["lengths"]["sources"]))
        else:
            files = [(r["audio"], r["length"])]
        for rel, n in files:
            _load(path.parent, rel, n)
    return len(recs)


def read_vocab(path):
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


__all__ = ["ManifestError", "Waveform", "check_manifest", "load_mixtures", "load_utterances",
           "read_manifest", "read_vocab"]
