"""Truncated backpropagation through the separator: gradients from one chunk only."""
from __future__ import annotations

from dataclasses import dataclass

from .. import autograd as ag
from ..autograd import Tensor
from ..frontend import receptive_field

CHUNK_POLICIES = ("uniform", "interior")


@dataclass(frozen=True)
class ChunkPlan:
    start: int
    length: int
    signal_length: int
    margin: int = 0  # samples kept clear of the signal edges, 0 under the uniform policy

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("chunk margin must be non-negative")
        if self.length < 1 or self.start < 0 or self.start + self.length > self.signal_length:
            raise ValueError(f"chunk [{self.start}, {self.start + self.length}) does not fit "
                             f"a signal of {self.signal_length} samples")

    @property
    def end(self):
        return self.start + self.length

    @property
    def is_full(self):
        return self.start == 0 and self.length == self.signal_length


def plan_chunk(config, n_samples, chunk_length, rng, policy="uniform"):
    """Pick where the differentiable chunk sits inside an ``n_samples`` signal.

    Starts are multiples of the encoder hop so that the chunk's frames line up
    with the frames of the full-signal pass.  ``"interior"`` keeps the chunk at
    least one receptive field away from both signal edges when the signal is
    long enough, otherwise it falls back to ``"uniform"``.
    """
    if chunk_length < config.L:
        raise ValueError(f"chunk length {chunk_length} is shorter than the encoder window L = {config.L}")
    if policy not in CHUNK_POLICIES:
        raise ValueError(f"chunk policy must be one of {CHUNK_POLICIES}, got {policy!r}")
    if n_samples <= chunk_length:
        return ChunkPlan(0, n_samples, n_samples)
    hop = config.stride
    lo, hi = 0, n_samples - chunk_length
    margin = 0
    if policy == "interior" and hi >= 2 * receptive_field(config):
        margin = receptive_field(config)
        lo, hi = margin, hi - margin
    first = -(-lo // hop) * hop
    starts = range(first, hi + 1, hop)
    start = starts[int(rng.integers(len(starts)))] if len(starts) else 0
    return ChunkPlan(start, chunk_length, n_samples, margin)


def tbptt_forward(model, x, chunk):
    """Separator outputs [S, T] where only ``chunk`` carries gradient.

    The whole signal is separated once without a graph; the chunk is then
    re-separated with a graph and spliced over the matching samples.
    """
    x = ag.as_tensor(x)
    if chunk.signal_length != x.shape[-1]:
        raise ValueError(f"chunk planned for {chunk.signal_length} samples, signal has {x.shape[-1]}")
    if chunk.is_full:
        return model(x)
    with ag.no_grad():
        full = model(x).data
    y = model(x[chunk.start:chunk.end])
    parts = []
    if chunk.start > 0:
        parts.append(Tensor(full[:, :chunk.start]))
    parts.append(y)
    if chunk.end < full.shape[-1]:
        parts.append(Tensor(full[:, chunk.end:]))
    return ag.concat(parts, axis=1)
