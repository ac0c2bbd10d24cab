"""Synthetic tone-word corpus: a licence-free, learnable stand-in for two-speaker read speech.

Each vocabulary word is a formant trajectory plus a pitch glide.  A speaker
profile supplies the pitch band, the harmonic tilt and a formant scaling, so
the same word sounds different per speaker while staying recognisable.
Utterances are words separated by short gaps; mixtures pair two distinct
speakers at a random ratio.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..seeding import rng_for
from .mixing import mix_pair
from .wav import Waveform, quantize, write_wav

RESERVED = ("<blank>", "<sos>", "<eos>")


class CorpusConfigError(ValueError):
    pass


@dataclass
class SpeakerProfile:
    name: str
    f0_range: tuple = (90.0, 130.0)
    tilt: float = 1.0
    formant_scale: float = 1.0


def _default_speakers():
    return [
        SpeakerProfile("low", (90.0, 125.0), tilt=1.2, formant_scale=1.0),
        SpeakerProfile("high", (190.0, 250.0), tilt=0.6, formant_scale=1.18),
    ]


@dataclass
class CorpusConfig:
    vocab_size: int = 8
    words_per_utterance: tuple = (2, 3)
    word_duration: tuple = (0.12, 0.2)
    gap_duration: float = 0.04
    edge_silence: tuple = (0.0, 0.08)
    sample_rate: int = 8000
    speakers: list = field(default_factory=_default_speakers)
    n_train: int = 200
    n_dev: int = 30
    n_test: int = 40
    snr_range_db: tuple = (0.0, 5.0)
    centroid_margin_hz: float = 100.0
    peak_level: float = 0.9
    seed: int = 0

    def __post_init__(self):
        self.speakers = [s if isinstance(s, SpeakerProfile) else SpeakerProfile(**s)
                         for s in self.speakers]
        for name in ("words_per_utterance", "word_duration", "edge_silence", "snr_range_db"):
            setattr(self, name, tuple(getattr(self, name)))
        for s in self.speakers:
            s.f0_range = tuple(s.f0_range)

    def validate(self):
        if self.vocab_size < 2:
            raise CorpusConfigError("vocab_size must be >= 2")
        if self.sample_rate <= 0:
            raise CorpusConfigError("sample_rate must be > 0")
        for name in ("words_per_utterance", "word_duration", "edge_silence", "snr_range_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise CorpusConfigError(f"{name}: empty range {lo}..{hi}")
        if self.words_per_utterance[0] < 1 or self.word_duration[0] <= 0:
            raise CorpusConfigError("utterances need at least one word of positive duration")
        if len(self.speakers) < 2:
            raise CorpusConfigError("need at least two speaker profiles")
        for s in self.speakers:
            if not 0 < s.f0_range[0] <= s.f0_range[1] < self.sample_rate / 4:
                raise CorpusConfigError(f"speaker {s.name}: bad f0_range {s.f0_range}")
        if min(self.n_train, self.n_dev, self.n_test) < 0:
            raise CorpusConfigError("dataset sizes must be >= 0")
        return self

    def to_dict(self):
        return asdict(self)


def vocabulary(config):
    return [f"w{i}" for i in range(config.vocab_size)]


# -- word signatures -------------------------------------------------------

@dataclass(frozen=True)
class WordSignature:
    f1: tuple
    f2: tuple
    glide: float


def word_signatures(config):
    """Deterministic, mutually separated signatures, one per vocabulary word."""
    rng = rng_for(config.seed, "word-signatures")
    sigs, points = [], []
    min_dist = 0.35
    while len(sigs) < config.vocab_size:
        for _ in range(200):
            f1 = tuple(rng.uniform(np.log(280), np.log(850), 2))
            f2 = tuple(rng.uniform(np.log(950), np.log(2400), 2))
            glide = rng.uniform(np.log(0.85), np.log(1.18))
            p = np.array([*f1, *f2, glide])
            if all(np.linalg.norm(p - q) >= min_dist for q in points):
                break
        else:
            min_dist *= 0.9
            continue
        points.append(p)
        sigs.append(WordSignature(tuple(np.exp(f1)), tuple(np.exp(f2)), float(np.exp(glide))))
    return sigs


def _resonance(freq, centre, rel_bw=0.18):
    return np.exp(-0.5 * ((freq - centre) / (rel_bw * centre)) ** 2)


def render_word(sig, speaker, f0, duration, sample_rate):
    """Harmonic rendering of one word by one speaker at base pitch ``f0``."""
    n = max(int(round(duration * sample_rate)), 8)
    frac = np.arange(n) / n
    f0_t = f0 * sig.glide ** frac
    f1_t = speaker.formant_scale * sig.f1[0] * (sig.f1[1] / sig.f1[0]) ** frac
    f2_t = speaker.formant_scale * sig.f2[0] * (sig.f2[1] / sig.f2[0]) ** frac
    phase = 2 * np.pi * np.cumsum(f0_t) / sample_rate
    n_harm = int(0.95 * (sample_rate / 2) / f0_t.max())
    k = np.arange(1, n_harm + 1)[:, None]
    hf = k * f0_t[None, :]
    amp = k ** (-speaker.tilt) * (0.05 + _resonance(hf, f1_t) + 0.7 * _resonance(hf, f2_t))
    x = np.sum(amp * np.sin(k * phase[None, :]), axis=0)
    ramp = min(int(0.01 * sample_rate), n // 2)
    env = np.ones(n)
    if ramp:
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    x = x * env
    return 0.1 * x / np.sqrt(np.mean(x * x))


def spectral_centroid(x, sample_rate):
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    return float(np.sum(freqs * spec) / np.sum(spec))


def speaker_centroid_gaps(config):
    """Centroid gap (Hz) of every speaker pair on a mid-band rendering of word 0."""
    sig = word_signatures(config)[0]
    cents = []
    for s in config.speakers:
        f0 = 0.5 * (s.f0_range[0] + s.f0_range[1])
        cents.append(spectral_centroid(render_word(sig, s, f0, 0.2, config.sample_rate),
                                       config.sample_rate))
    return [abs(a - b) for i, a in enumerate(cents) for b in cents[i + 1:]]


# -- utterances and mixtures ----------------------------------------------

def render_utterance(config, utt_id, speaker_index, signatures=None):
    """Return ``(samples, word tokens)`` for one utterance; deterministic in ``(seed, utt_id)``."""
    rng = rng_for(config.seed, "utterance", utt_id)
    sigs = signatures or word_signatures(config)
    speaker = config.speakers[speaker_index]
    sr = config.sample_rate
    n_words = int(rng.integers(config.words_per_utterance[0], config.words_per_utterance[1] + 1))
    words = rng.integers(0, config.vocab_size, n_words)
    f0 = rng.uniform(*speaker.f0_range)
    lead = rng.uniform(*config.edge_silence)
    tail = rng.uniform(*config.edge_silence)
    parts = [np.zeros(int(lead * sr))]
    gap = np.zeros(int(config.gap_duration * sr))
    for j, w in enumerate(words):
        dur = rng.uniform(*config.word_duration)
        jitter = rng.uniform(0.97, 1.03)
        parts.append(render_word(sigs[w], speaker, f0 * jitter, dur, sr))
        if j < n_words - 1:
            parts.append(gap)
    parts.append(np.zeros(int(tail * sr)))
    return np.concatenate(parts), [f"w{w}" for w in words]


def make_mixture(config, split, index, variant, signatures=None):
    """Build one two-speaker mixture; sources and mixture lie on the 16-bit grid."""
    rng = rng_for(config.seed, "mixture", split, index)
    spk = rng.choice(len(config.speakers), size=2, replace=False)
    snr = float(rng.uniform(*config.snr_range_db))
    base = f"{split}-{index:05d}"
    sigs = signatures or word_signatures(config)
    (x1, t1) = render_utterance(config, f"{base}-a", int(spk[0]), sigs)
    (x2, t2) = render_utterance(config, f"{base}-b", int(spk[1]), sigs)
    sr = config.sample_rate
    ex = mix_pair(Waveform(x1, sr), Waveform(x2, sr), snr, variant)
    gain = config.peak_level / max(np.max(np.abs(ex.mixture.samples)), 1e-12)
    # Common gain keeps the ratio; quantising the sources first keeps mixture == sum exactly.
    a = quantize(ex.sources[0].samples * gain)
    b = quantize(ex.sources[1].samples * gain)
    ex.sources = [Waveform(a, sr), Waveform(b, sr)]
    ex.mixture = Waveform(a + b, sr)
    ex.transcripts = [t1, t2]
    ex.id = f"{base}-{variant}"
    ex.meta.update(speakers=[config.speakers[i].name for i in spk], utterances=[f"{base}-a", f"{base}-b"])
    return ex


def clean_utterance(config, utt_id, speaker_index, signatures=None):
    x, words = render_utterance(config, utt_id, speaker_index, signatures)
    x = quantize(x * (config.peak_level / max(np.max(np.abs(x)), 1e-12)))
    return Waveform(x, config.sample_rate), words


# -- on-disk corpus --------------------------------------------------------

def generate_toneword_corpus(config, out_dir):
    """Render the full corpus under ``out_dir`` and return the manifest paths by name.

    Writes ``vocab.txt``, ``corpus.json`` (resolved config), WAV files under
    ``wav/`` and one JSON-lines manifest per split/variant.
    """
    config.validate()
    gaps = speaker_centroid_gaps(config)
    if min(gaps) < config.centroid_margin_hz:
        raise CorpusConfigError(
            f"speaker profiles too similar: centroid gap {min(gaps):.1f} Hz < "
            f"{config.centroid_margin_hz} Hz")
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    sigs = word_signatures(config)
    (out / "vocab.txt").write_text("\n".join(RESERVED + tuple(vocabulary(config))) + "\n")
    (out / "corpus.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    manifests = {}
    for split, count in (("train", config.n_train), ("dev", config.n_dev), ("test", config.n_test)):
        wav_dir = out / "wav" / split
        wav_dir.mkdir(parents=True, exist_ok=True)
        clean_records = []
        for variant in ("min", "max"):
            records = []
            for i in range(count):
                ex = make_mixture(config, split, i, variant, sigs)
                mix_path = wav_dir / f"{ex.id}-mix.wav"
                write_wav(mix_path, ex.mixture)
                src_paths = []
                for s, src in enumerate(ex.sources):
                    p = wav_dir / f"{ex.id}-s{s + 1}.wav"
                    write_wav(p, src)
                    src_paths.append(p.relative_to(out).as_posix())
                records.append({
                    "id": ex.id,
                    "variant": variant,
                    "sample_rate": config.sample_rate,
                    "mixture": mix_path.relative_to(out).as_posix(),
                    "sources": src_paths,
                    "transcripts": ex.transcripts,
                    "snr_db": ex.mix_snr_db,
                    "lengths": {"mixture": len(ex.mixture), "sources": [len(s) for s in ex.sources]},
                    "speakers": ex.meta["speakers"],
                })
                if variant == "max":
                    for utt_id, spk_name in zip(ex.meta["utterances"], ex.meta["speakers"]):
                        spk_idx = [s.name for s in config.speakers].index(spk_name)
                        wav, words = clean_utterance(config, utt_id, spk_idx, sigs)
                        p = wav_dir / f"{utt_id}-clean.wav"
                        write_wav(p, wav)
                        clean_records.append({
                            "id": utt_id, "audio": p.relative_to(out).as_posix(),
                            "transcript": words, "length": len(wav),
                            "sample_rate": config.sample_rate, "speaker": spk_name,
                        })
            manifests[f"{split}_{variant}"] = _write_manifest(out / f"{split}_{variant}.jsonl", records)
        manifests[f"{split}_clean"] = _write_manifest(out / f"{split}_clean.jsonl", clean_records)
    return manifests


def _write_manifest(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return path
