"""CTC/attention recognizer: log-mel front, conv + BLSTM encoder, CTC head, attention decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..nn import Module, uniform_fan_in
from ..seeding import rng_for
from .ctc import ctc_loss, greedy_ctc_decode
from .features import LogMel

RESERVED = ("<blank>", "<sos>", "<eos>")


class Vocabulary:
    """Token table with ``<blank>``, ``<sos>``, ``<eos>`` at ids 0, 1, 2.

    CTC classes are blank + words; attention outputs are words + eos;
    attention inputs are sos + words.
    """

    def __init__(self, words):
        words = [w for w in words if w not in RESERVED]
        if len(set(words)) != len(words):
            raise ValueError("duplicate tokens in vocabulary")
        self.words = list(words)
        self.tokens = list(RESERVED) + self.words
        self._index = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def from_file(cls, path):
        from pathlib import Path
        tokens = [t.strip() for t in Path(path).read_text().splitlines() if t.strip()]
        if tuple(tokens[:3]) != RESERVED:
            raise ValueError(f"{path}: first three tokens must be {RESERVED}")
        return cls(tokens[3:])

    def __len__(self):
        return len(self.words)

    def word_index(self, word):
        try:
            return self._index[word]
        except KeyError:
            raise KeyError(f"unknown token {word!r}") from None

    def ctc_ids(self, words):
        return [1 + self.word_index(w) for w in words]

    def ctc_words(self, ids):
        return [self.words[i - 1] for i in ids]

    @property
    def n_ctc(self):
        return len(self.words) + 1

    @property
    def n_att(self):
        return len(self.words) + 1

    @property
    def eos_att(self):
        return len(self.words)


@dataclass
class AsrConfig:
    n_mels: int = 80
    win_length: int = 256
    hop_length: int = 128
    sample_rate: int = 8000
    conv_channels: tuple = (64, 64)
    subsampling: int = 2
    rnn_hidden: int = 64
    enc_dim: int = 64
    emb_dim: int = 32
    dec_hidden: int = 64
    att_dim: int = 64
    lam: float = 0.2
    vocab: list = field(default_factory=lambda: [f"w{i}" for i in range(8)])

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        self.vocab = list(self.vocab)

    def validate(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.subsampling < 1:
            raise ValueError("subsampling must be >= 1")
        if any(t in RESERVED for t in self.vocab):
            raise ValueError("vocab lists plain words; reserved tokens are implicit")
        if len(self.vocab) < 1:
            raise ValueError("empty vocabulary")
        return self

    def to_dict(self):
        return asdict(self)


class AsrModel(Module):
    kind = "asr"

    def __init__(self, config=None, seed=0, dtype=np.float64):
        super().__init__()
        self.config = cfg = (config or AsrConfig()).validate()
        self.vocab = Vocabulary(cfg.vocab)
        self.features = LogMel(cfg.n_mels, cfg.win_length, cfg.hop_length, cfg.sample_rate)
        rng = rng_for(seed, "asr-init")

        def lin(name, n_in, n_out, bias=True):
            self.add_param(f"{name}.weight", uniform_fan_in(rng, (n_in, n_out), n_in).astype(dtype))
            if bias:
                self.add_param(f"{name}.bias", np.zeros(n_out, dtype=dtype))

        c_in = cfg.n_mels
        for i, c in enumerate(cfg.conv_channels):
            self.add_param(f"enc.conv{i}.weight", uniform_fan_in(rng, (c, c_in, 3), 3 * c_in).astype(dtype))
            self.add_param(f"enc.conv{i}.bias", np.zeros(c, dtype=dtype))
            c_in = c
        H = cfg.rnn_hidden
        for d in ("fwd", "bwd"):
            lin(f"enc.lstm_{d}.ih", c_in, 4 * H)
            self.add_param(f"enc.lstm_{d}.hh", uniform_fan_in(rng, (H, 4 * H), H).astype(dtype))
        lin("enc.proj", 2 * H, cfg.enc_dim)
        lin("ctc", cfg.enc_dim, self.vocab.n_ctc)
        self.add_param("dec.embed", rng.normal(0.0, 1.0, (self.vocab.n_att, cfg.emb_dim)).astype(dtype))
        lin("dec.lstm.ih", cfg.emb_dim, 4 * cfg.dec_hidden)
        self.add_param("dec.lstm.hh", uniform_fan_in(rng, (cfg.dec_hidden, 4 * cfg.dec_hidden),
                                                     cfg.dec_hidden).astype(dtype))
        lin("dec.query", cfg.dec_hidden, cfg.enc_dim, bias=False)
        lin("dec.hidden", cfg.dec_hidden + cfg.enc_dim, cfg.att_dim)
        lin("dec.out", cfg.att_dim, self.vocab.n_att)
        self._norm_consts = {}

    def config_dict(self):
        return self.config.to_dict()

    def decoder_parameters(self):
        return [p for k, p in self.params.items() if k.startswith("dec.")]

    def _affine(self, x, name):
        b = self.params.get(f"{name}.bias")
        return ag.affine(x, self.params[f"{name}.weight"], b)

    def encoder_frames(self, n_samples):
        tf = self.features.num_frames(n_samples)
        return -(-tf // self.config.subsampling)

    def encode(self, x):
        """Waveform [T] -> encoder states [Tenc, enc_dim], Tenc = ceil(frames / subsampling)."""
        cfg = self.config
        feats = self.features(x)
        dt = feats.dtype.type
        if dt not in self._norm_consts:
            self._norm_consts[dt] = (Tensor(np.ones(cfg.n_mels, dtype=dt)), Tensor(np.zeros(cfg.n_mels, dtype=dt)))
        one, zero = self._norm_consts[dt]
        # Utterance-level mean/variance normalisation makes the features gain-invariant.
        h = ag.global_layer_norm(feats, one, zero, eps=1e-5)
        last = len(cfg.conv_channels) - 1
        for i in range(len(cfg.conv_channels)):
            stride = cfg.subsampling if i == last else 1
            h = ag.relu(ag.conv1d(h, self.params[f"enc.conv{i}.weight"], self.params[f"enc.conv{i}.bias"],
                                  stride=stride, padding=1))
        h = ag.transpose(h)
        fwd = ag.lstm_sequence(self._affine(h, "enc.lstm_fwd.ih"), self.params["enc.lstm_fwd.hh"])
        bwd = ag.lstm_sequence(self._affine(h, "enc.lstm_bwd.ih"), self.params["enc.lstm_bwd.hh"], reverse=True)
        return ag.tanh(self._affine(ag.concat([fwd, bwd], axis=1), "enc.proj"))

    def ctc_log_probs(self, enc):
        return ag.log_softmax(self._affine(enc, "ctc"))

    def ctc_loss(self, enc, words):
        return ctc_loss(self.ctc_log_probs(enc), self.vocab.ctc_ids(words))

    def attention_loss(self, enc, words):
        """Teacher-forced cross-entropy of ``words + <eos>`` with dot-product attention over ``enc``."""
        if len(words) == 0:
            raise ValueError("attention_decoder_loss needs a non-empty label sequence")
        v = self.vocab
        idx = [v.word_index(w) for w in words]
        inputs = [0] + [1 + i for i in idx]
        targets = idx + [v.eos_att]
        emb = ag.take_rows(self.params["dec.embed"], inputs)
        hdec = ag.lstm_sequence(self._affine(emb, "dec.lstm.ih"), self.params["dec.lstm.hh"])
        q = self._affine(hdec, "dec.query") * (1.0 / np.sqrt(self.config.enc_dim))
        att = ag.softmax(q @ ag.transpose(enc), axis=-1)
        ctx = att @ enc
        o = ag.tanh(self._affine(ag.concat([hdec, ctx], axis=1), "dec.hidden"))
        lp = ag.log_softmax(self._affine(o, "dec.out"))
        return -ag.sum(ag.pick(lp, targets))

    def losses(self, x, words):
        """Return ``(L_ctc, L_att)`` as scalar tensors for one utterance."""
        enc = self.encode(x)
        return self.ctc_loss(enc, words), self.attention_loss(enc, words)

    def loss(self, x, words, lam=None):
        lam = self.config.lam if lam is None else lam
        enc = self.encode(x)
        l_ctc = self.ctc_loss(enc, words) if lam > 0.0 else None
        l_att = self.attention_loss(enc, words) if lam < 1.0 else None
        return asr_loss(l_ctc, l_att, lam)

    def recognize(self, x):
        with ag.no_grad():
            enc = self.encode(ag.as_tensor(x))
            lp = self.ctc_log_probs(enc)
        return self.vocab.ctc_words(greedy_ctc_decode(lp))


def asr_loss(l_ctc, l_att, lam):
    """``lam * L_ctc + (1 - lam) * L_att``; exact at the endpoints."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    if lam == 1.0:
        return l_ctc * 1.0
    if lam == 0.0:
        return l_att * 1.0
    return l_ctc * lam + l_att * (1.0 - lam)
