"""Deterministic random streams.

Every sampled value in the library is drawn from a counter-based Philox
generator keyed by (master_seed, stream, path).  Distinct stream labels give
statistically independent streams from one master seed, so adding threads or
reordering work never changes sampled values: a computation re-derives its
generator from its own coordinates instead of sharing generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

STREAMS = {
    "codegen": 0,
    "erasure-resolution": 1,
    "attack": 2,
    "trial-index": 3,
}


@dataclass(frozen=True)
class Seed:
    """Coordinates of one deterministic random stream.

    `path` extends the stream for per-trial / per-object substreams, e.g.
    ``Seed(7, "attack", (trial,))``.
    """

    master_seed: int
    stream: str
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.stream not in STREAMS:
            raise ParameterError(
                f"unknown stream label {self.stream!r}; expected one of {sorted(STREAMS)}"
            )
        if not (0 <= int(self.master_seed) < 2**64):
            raise ParameterError("master_seed must be a 64-bit unsigned integer")

    def child(self, *path: int) -> "Seed":
        return Seed(self.master_seed, self.stream, self.path + tuple(int(p) for p in path))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(STREAMS[self.stream], *self.path)
        )
        return np.random.Generator(np.random.Philox(seq))
