"""Deterministic random substreams keyed by (master seed, realization, label)."""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "block_label"]


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("ascii"))


def substream(seed: int, kappa: int, label: str) -> np.random.Generator:
    """Return an independent generator for one labelled quantity of one realization.

    The stream depends only on ``(seed, kappa, label)``, never on the order in
    which realizations are executed.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(kappa), _label_key(label)))
    return np.random.Generator(np.random.PCG64(ss))


def block_label(kind: str, m: int, n: int) -> str:
    """Stream label of the amplitude (``"Z"``) or phase (``"Phi"``) germ of block (m, n), 1-based."""
    return f"{kind}:{m}{n}"
