"""Slotted transmitter: frame layout, sensing codebook, per-user signals, scenario draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import UserTransmission, sample_aoas
from .polar import PolarCodec

CODEBOOK_CAP_BITS = 24
_CHUNK_ROWS = 4096
_CODEBOOK_STREAM = 0x5E45


@dataclass(frozen=True)
class FrameLayout:
    n: int
    s_c: int = 1
    s_s: int = 1

    def __post_init__(self):
        if min(self.n, self.s_c, self.s_s) < 1:
            raise ValueError("frame length and slot counts must be positive")
        if self.n % self.s_c or self.n % self.s_s:
            raise ValueError(f"slot counts ({self.s_c}, {self.s_s}) must divide n={self.n}")

    @property
    def n_c(self):
        return self.n // self.s_c

    @property
    def n_s(self):
        return self.n // self.s_s

    def comm_slot(self, i):
        if not 0 <= i < self.s_c:
            raise IndexError(f"communication slot {i} out of range")
        return slice(i * self.n_c, (i + 1) * self.n_c)

    def sens_slot(self, t):
        if not 0 <= t < self.s_s:
            raise IndexError(f"sensing slot {t} out of range")
        return slice(t * self.n_s, (t + 1) * self.n_s)

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.n, cfg.s_c, cfg.s_s)


def _codebook_chunk(seed, chunk, rows, n_s, power):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _CODEBOOK_STREAM, int(chunk)]))
    a = rng.standard_normal((rows, n_s)) + 1j * rng.standard_normal((rows, n_s))
    a *= np.sqrt(power * n_s) / np.linalg.norm(a, axis=1, keepdims=True)
    return a


class SensingCodebook:
    """2^b_s complex rows of length n_s, each rescaled to energy P_s n_s exactly.

    Rows are generated in fixed chunks keyed by (seed, chunk index), so a row
    does not depend on whether the book is materialized (``lazy=False``) or
    regenerated on demand (``lazy=True``).
    """

    def __init__(self, b_s, n_s, power, seed, lazy=False):
        if b_s < 1:
            raise ValueError("b_s must be >= 1")
        if not lazy and b_s > CODEBOOK_CAP_BITS:
            raise MemoryError(f"2^{b_s} rows exceed the in-memory cap 2^{CODEBOOK_CAP_BITS}; use lazy=True")
        if power <= 0:
            raise ValueError("sensing power must be positive")
        self.b_s, self.n_s, self.power, self.seed, self.lazy = int(b_s), int(n_s), float(power), int(seed), lazy
        self.size = 1 << self.b_s
        self._chunk = min(self.size, _CHUNK_ROWS)
        self._rows = None if lazy else self._build()

    def _build(self):
        chunks = [
            _codebook_chunk(self.seed, c, self._chunk, self.n_s, self.power)
            for c in range(self.size // self._chunk)
        ]
        return np.concatenate(chunks) if len(chunks) > 1 else chunks[0]

    @property
    def rows(self):
        if self._rows is None:
            raise MemoryError("lazy codebook has no materialized matrix; use row() or iter_chunks()")
        return self._rows

    def row(self, i):
        if not 0 <= i < self.size:
            raise IndexError(f"codeword {i} outside 0..{self.size - 1}")
        if self._rows is not None:
            return self._rows[i]
        c, r = divmod(int(i), self._chunk)
        return _codebook_chunk(self.seed, c, self._chunk, self.n_s, self.power)[r]

    def iter_chunks(self):
        """Yields (first row index, block of rows)."""
        if self._rows is not None:
            yield 0, self._rows
            return
        for c in range(self.size // self._chunk):
            yield c * self._chunk, _codebook_chunk(self.seed, c, self._chunk, self.n_s, self.power)

    def rescaled(self, power):
        """Same rows at a different energy (rows scale linearly in sqrt(power))."""
        out = SensingCodebook.__new__(SensingCodebook)
        out.__dict__.update(self.__dict__)
        out.power = float(power)
        if self._rows is not None:
            out._rows = self._rows * np.sqrt(power / self.power)
        return out


def build_sensing_codebook(b_s, layout, p_s, seed, lazy=False):
    return SensingCodebook(b_s, layout.n_s, p_s, seed, lazy=lazy)


@dataclass(frozen=True)
class TxRecord:
    role: str
    slot: int
    payload: object  # message bits (comm) or codeword row (sensing)
    aoa: float
    signal: np.ndarray

    def transmission(self):
        return UserTransmission(self.aoa, self.signal, self.role)


def encode_comm_user(message, layout, codec, p_c, slot, aoa=0.0):
    sig = np.zeros(layout.n, dtype=complex)
    sig[layout.comm_slot(slot)] = codec.modulate(message, np.sqrt(p_c))
    return TxRecord("communication", slot, np.asarray(message, dtype=np.uint8), float(aoa), sig)


def encode_sensing_user(codebook, layout, row, slot, aoa=0.0):
    if codebook.n_s != layout.n_s:
        raise ValueError("codebook row length does not match the sensing slot length")
    sig = np.zeros(layout.n, dtype=complex)
    sig[layout.sens_slot(slot)] = codebook.row(row)
    return TxRecord("sensing", slot, int(row), float(aoa), sig)


@dataclass
class ScenarioTruth:
    comm_messages: np.ndarray  # K_c x B_c
    comm_slots: np.ndarray
    comm_aoas: np.ndarray
    sens_rows: np.ndarray
    sens_slots: np.ndarray
    sens_aoas: np.ndarray

    @property
    def k_c(self):
        return len(self.comm_slots)

    @property
    def k_s(self):
        return len(self.sens_slots)


def draw_truth(cfg, rng):
    """Messages, slots, codeword rows and AOAs for one frame, all uniform and independent."""
    msgs = rng.integers(0, 2, (cfg.k_c, cfg.b_c), dtype=np.uint8)
    c_slots = rng.integers(0, cfg.s_c, cfg.k_c)
    c_aoas = sample_aoas(rng, cfg.k_c)
    rows = rng.integers(0, 1 << cfg.b_s, cfg.k_s)
    s_slots = rng.integers(0, cfg.s_s, cfg.k_s)
    s_aoas = sample_aoas(rng, cfg.k_s)
    return ScenarioTruth(msgs, c_slots, c_aoas, rows, s_slots, s_aoas)


def assemble_scenario(cfg, rng, codec, codebook, p_c, truth=None):
    """Per-user transmit records for one frame plus the ground truth used for scoring."""
    layout = FrameLayout.from_config(cfg)
    truth = draw_truth(cfg, rng) if truth is None else truth
    records = [
        encode_comm_user(truth.comm_messages[j], layout, codec, p_c, int(truth.comm_slots[j]), truth.comm_aoas[j])
        for j in range(truth.k_c)
    ]
    records += [
        encode_sensing_user(codebook, layout, int(truth.sens_rows[j]), int(truth.sens_slots[j]), truth.sens_aoas[j])
        for j in range(truth.k_s)
    ]
    return records, truth


def make_codec(cfg):
    return PolarCodec(cfg.b_c, cfg.n_c, cfg.crc, cfg.list_size, cfg.design_snr_db)
