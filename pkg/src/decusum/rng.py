"""Deterministic random substreams.

Every random number used by a simulation is a function of
``(seed, stream, trial, kind)`` only:

* ``seed`` is the master seed of an experiment;
* ``stream`` separates estimators that must not share noise (see the
  ``STREAM_*`` constants);
* ``trial`` is the Monte Carlo trial index;
* ``kind`` separates observation noise from auxiliary coins.

The substream is ``PCG64(SeedSequence(seed, spawn_key=(stream, trial, kind)))``.
Observation noise for a trial with ``L`` sensors is read row by row as a
``(steps, L)`` matrix of standard normals, so the draw feeding sensor ``l`` at
step ``n`` is element ``(n - 1, l)``.  numpy fills such matrices sequentially,
which makes the value independent of how the matrix is cut into blocks, and
independent of which other trials run in the same batch or process.
"""

from __future__ import annotations

import numpy as np

STREAM_SINGLE = 0
STREAM_FAR = 1
STREAM_DELAY = 2
STREAM_PDC = 3
STREAM_ORACLE = 4

KIND_OBSERVATION = 0
KIND_COIN = 1


def substream(seed: int, stream: int, trial: int, kind: int = KIND_OBSERVATION) -> np.random.Generator:
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial must be non-negative")
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(trial), int(kind)))
    return np.random.Generator(np.random.PCG64(seq))


class NoiseBuffer:
    """Random access to a trial's ``(steps, width)`` noise matrix.

    Rows are generated on demand in doubling blocks; values are identical to
    those the batch engine draws for the same substream.
    """

    def __init__(self, gen: np.random.Generator, width: int, *, uniform: bool = False):
        self._gen = gen
        self.width = width
        self._uniform = uniform
        self._rows = np.empty((0, width))

    def __len__(self) -> int:
        return self._rows.shape[0]

    def row(self, n: int) -> np.ndarray:
        """Noise row for step ``n`` (1-based)."""
        if n < 1:
            raise ValueError(f"step index must be >= 1, got {n}")
        if n > len(self):
            need = max(n - len(self), max(64, len(self)))
            if self._uniform:
                block = self._gen.random((need, self.width))
            else:
                block = self._gen.standard_normal((need, self.width))
            self._rows = np.concatenate([self._rows, block])
        return self._rows[n - 1]
