"""CRC-aided polar coding: construction, encoding, BPSK mapping, and SCL decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.optimize import brentq

CCITT16 = 0x11021  # x^16 + x^12 + x^5 + 1


@dataclass(frozen=True)
class CrcSpec:
    """CRC with ``r`` parity bits; ``poly`` includes the leading x^r term."""

    r: int = 16
    poly: int = CCITT16

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("CRC needs at least one parity bit")
        if self.poly >> self.r != 1 or not self.poly & 1:
            raise ValueError(f"generator 0x{self.poly:x} must have degree {self.r} and a constant term")

    @property
    def generator(self):
        return np.array([(self.poly >> (self.r - i)) & 1 for i in range(self.r + 1)], dtype=np.uint8)


def crc_remainder(bits, spec):
    """Remainder of bits(x) * x^r modulo the generator (zero initial register)."""
    g = spec.generator
    reg = np.concatenate([np.asarray(bits, dtype=np.uint8) & 1, np.zeros(spec.r, dtype=np.uint8)])
    for i in range(len(reg) - spec.r):
        if reg[i]:
            reg[i : i + spec.r + 1] ^= g
    return reg[-spec.r :]


def crc_attach(bits, spec):
    bits = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([bits, crc_remainder(bits, spec)])


def crc_check(frame, spec):
    frame = np.asarray(frame, dtype=np.uint8)
    if len(frame) < spec.r + 1:
        raise ValueError(f"frame of {len(frame)} bits is shorter than r + 1 = {spec.r + 1}")
    return bool(np.array_equal(crc_remainder(frame[: -spec.r], spec), frame[-spec.r :]))


def crc_parity_matrix(k, spec):
    """GF(2) matrix P (k x r) with crc(m) = m P; valid because the register starts at zero."""
    eye = np.eye(k, dtype=np.uint8)
    return np.stack([crc_remainder(row, spec) for row in eye]) if k else np.zeros((0, spec.r), np.uint8)


# ---------------------------------------------------------------------------
# construction (Gaussian approximation of density evolution)


def _log_phi(x):
    if x <= 0.0:
        return 0.0
    if x < 10.0:
        return min(0.0, -0.4527 * x**0.86 + 0.0218)
    return 0.5 * math.log(math.pi / x) - 0.25 * x + math.log1p(-10.0 / (7.0 * x))


def _log_phi_inv(t):
    if t >= 0.0:
        return 0.0
    hi = 4.0 * abs(t) + 100.0
    return brentq(lambda x: _log_phi(x) - t, 1e-12, hi, xtol=1e-12, rtol=1e-12)


def ga_reliability(n, design_snr_db, rate):
    """Mean LLR of every synthetic channel (natural index order) for an ``n``-point code.

    ``design_snr_db`` is an Eb/N0; the per-symbol mean LLR is 4 R Eb/N0.
    """
    m = np.array([4.0 * rate * 10.0 ** (design_snr_db / 10.0)])
    while len(m) < n:
        nxt = np.empty(2 * len(m))
        for j, mj in enumerate(m):
            lp = _log_phi(mj)
            phi = math.exp(lp)
            nxt[2 * j] = _log_phi_inv(lp + math.log(2.0 - phi))
            nxt[2 * j + 1] = 2.0 * mj
        m = nxt
    return m


@dataclass(frozen=True)
class PolarCodeSpec:
    block_length: int
    info_set: tuple
    design_snr_db: float

    @property
    def info_count(self):
        return len(self.info_set)

    @property
    def frozen_set(self):
        info = set(self.info_set)
        return tuple(i for i in range(self.block_length) if i not in info)

    @property
    def frozen_mask(self):
        mask = np.ones(self.block_length, dtype=np.bool_)
        mask[list(self.info_set)] = False
        return mask


@lru_cache(maxsize=64)
def construct_code(n_c, k, design_snr_db=2.0):
    """Pick the ``k`` most reliable synthetic channels of an ``n_c``-point polar code."""
    if n_c < 1 or n_c & (n_c - 1):
        raise ValueError(f"block length {n_c} is not a power of two")
    if not 0 < k <= n_c:
        raise ValueError(f"need 0 < k <= n_c, got k={k}, n_c={n_c}")
    rel = ga_reliability(n_c, design_snr_db, k / n_c)
    order = np.lexsort((np.arange(n_c), -rel))  # most reliable first, ties by index
    return PolarCodeSpec(n_c, tuple(sorted(int(i) for i in order[:k])), float(design_snr_db))


def polar_transform(u):
    """x = u F^{(x)n} over GF(2) with F = [[1, 0], [1, 1]]; works on the last axis."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    h = 1
    while h < n:
        v = x.reshape(x.shape[:-1] + (n // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def polar_encode(info, spec):
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] != spec.info_count:
        raise ValueError(f"expected {spec.info_count} info bits, got {info.shape[-1]}")
    u = np.zeros(info.shape[:-1] + (spec.block_length,), dtype=np.uint8)
    u[..., list(spec.info_set)] = info
    return polar_transform(u)


def bpsk_map(bits, amplitude):
    """0 -> +amplitude, 1 -> -amplitude."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    return amplitude * (1.0 - 2.0 * np.asarray(bits, dtype=float))


# ---------------------------------------------------------------------------
# successive-cancellation list decoding


@numba.njit(cache=True)
def _softplus(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@numba.njit(cache=True)
def _writable(ptr, ref, p, d, nslots):
    s = ptr[p, d]
    if ref[d, s] == 1:
        return s
    ref[d, s] -= 1
    for s2 in range(nslots):
        if ref[d, s2] == 0:
            ptr[p, d] = s2
            ref[d, s2] = 1
            return s2
    return -1  # unreachable: a shared slot implies a free one


@numba.njit(cache=True)
def _scl(chan, frozen, k_info, parity, list_size):
    """Returns (status, message). status 1: CRC-valid path found."""
    nn = chan.shape[0]
    n = 0
    while (1 << n) < nn:
        n += 1
    L = list_size
    off = np.zeros(n + 2, dtype=np.int64)
    for d in range(1, n + 2):
        off[d] = off[d - 1] + (nn >> (d - 1))
    size = off[n + 1]

    llr = np.zeros((L, size))
    ps = np.zeros((L, size), dtype=np.uint8)
    llr_ptr = np.zeros((L, n + 1), dtype=np.int64)
    ps_ptr = np.zeros((L, n + 1), dtype=np.int64)
    llr_ref = np.zeros((n + 1, L), dtype=np.int64)
    ps_ref = np.zeros((n + 1, L), dtype=np.int64)
    uinfo = np.zeros((L, k_info), dtype=np.uint8)
    pm = np.zeros(L)
    active = np.zeros(L, dtype=np.bool_)
    active[0] = True
    for d in range(n + 1):
        llr_ref[d, 0] = 1
        ps_ref[d, 0] = 1
    tmp = np.zeros(nn, dtype=np.uint8)
    lam = np.zeros(L)
    cand = np.empty(2 * L)
    keep = np.zeros((L, 2), dtype=np.bool_)
    kidx = 0

    for i in range(nn):
        if i == 0:
            dg = 0
            dstart = 1
        else:
            tz = 0
            while not (i >> tz) & 1:
                tz += 1
            dg = n - tz
            dstart = dg
        for p in range(L):
            if not active[p]:
                continue
            for d in range(dstart, n + 1):
                h = nn >> d
                s = _writable(llr_ptr, llr_ref, p, d, L)
                o = off[d]
                if d == 1:
                    for j in range(h):
                        a = chan[j]
                        b = chan[j + h]
                        if d == dg:
                            u = ps[ps_ptr[p, d], off[d] + j]
                            llr[s, o + j] = b + (1.0 - 2.0 * u) * a
                        else:
                            sg = 1.0 if (a >= 0.0) == (b >= 0.0) else -1.0
                            llr[s, o + j] = sg * min(abs(a), abs(b))
                else:
                    ps_ = llr_ptr[p, d - 1]
                    po = off[d - 1]
                    for j in range(h):
                        a = llr[ps_, po + j]
                        b = llr[ps_, po + j + h]
                        if d == dg:
                            u = ps[ps_ptr[p, d], off[d] + j]
                            llr[s, o + j] = b + (1.0 - 2.0 * u) * a
                        else:
                            sg = 1.0 if (a >= 0.0) == (b >= 0.0) else -1.0
                            llr[s, o + j] = sg * min(abs(a), abs(b))
            lam[p] = llr[llr_ptr[p, n], off[n]]

        if frozen[i]:
            for p in range(L):
                if active[p]:
                    pm[p] += _softplus(-lam[p])
        else:
            nact = 0
            for p in range(L):
                if active[p]:
                    nact += 1
                    cand[2 * p] = pm[p] + _softplus(-lam[p])
                    cand[2 * p + 1] = pm[p] + _softplus(lam[p])
                else:
                    cand[2 * p] = np.inf
                    cand[2 * p + 1] = np.inf
            nkeep = min(L, 2 * nact)
            order = np.argsort(cand, kind="mergesort")
            keep[:, :] = False
            for c in range(nkeep):
                keep[order[c] // 2, order[c] % 2] = True
            for p in range(L):
                if active[p] and not keep[p, 0] and not keep[p, 1]:
                    active[p] = False
                    for d in range(n + 1):
                        llr_ref[d, llr_ptr[p, d]] -= 1
                        ps_ref[d, ps_ptr[p, d]] -= 1
            for p in range(L):
                if not (active[p] and keep[p, 0] and keep[p, 1]):
                    continue
                # both branches survive: clone into a free path that takes bit 1
                q = 0
                while active[q]:
                    q += 1
                active[q] = True
                for d in range(n + 1):
                    llr_ptr[q, d] = llr_ptr[p, d]
                    ps_ptr[q, d] = ps_ptr[p, d]
                    llr_ref[d, llr_ptr[p, d]] += 1
                    ps_ref[d, ps_ptr[p, d]] += 1
                for j in range(kidx):
                    uinfo[q, j] = uinfo[p, j]
                lam[q] = lam[p]
                pm[q] = cand[2 * p + 1]
                uinfo[q, kidx] = 1
                keep[q, 0] = False
                keep[q, 1] = False
                pm[p] = cand[2 * p]
                uinfo[p, kidx] = 0
                keep[p, 0] = False
                keep[p, 1] = False
            for p in range(L):
                if active[p] and keep[p, 0] != keep[p, 1]:
                    bit = 1 if keep[p, 1] else 0
                    pm[p] = cand[2 * p + bit]
                    uinfo[p, kidx] = bit
            kidx += 1

        # propagate partial sums
        for p in range(L):
            if not active[p]:
                continue
            if frozen[i]:
                tmp[0] = 0
            else:
                tmp[0] = uinfo[p, kidx - 1]
            h = 1
            d = n
            idx = i
            while d > 0 and idx & 1:
                sl = ps_ptr[p, d]
                o = off[d]
                for j in range(h):
                    tmp[h + j] = tmp[j]
                    tmp[j] ^= ps[sl, o + j]
                h *= 2
                d -= 1
                idx >>= 1
            if d > 0:
                s = _writable(ps_ptr, ps_ref, p, d, L)
                o = off[d]
                for j in range(h):
                    ps[s, o + j] = tmp[j]

    # pick the most likely path that passes the CRC
    k_msg = k_info - parity.shape[1]
    r = parity.shape[1]
    order = np.argsort(np.where(active, pm, np.inf), kind="mergesort")
    for c in range(L):
        p = order[c]
        if not active[p]:
            break
        ok = True
        for t in range(r):
            acc = 0
            for j in range(k_msg):
                acc ^= uinfo[p, j] & parity[j, t]
            if acc != uinfo[p, k_msg + t]:
                ok = False
                break
        if ok:
            return 1, uinfo[p, :k_msg].copy()
    return 0, uinfo[order[0], :k_msg].copy()


def scl_decode(llr, spec, crc, list_size=32, parity=None):
    """Decode channel LLRs (positive favours bit 0). Returns message bits or ``None``."""
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    if llr.shape != (spec.block_length,):
        raise ValueError(f"expected {spec.block_length} LLRs, got shape {llr.shape}")
    if list_size < 1:
        raise ValueError("list size must be >= 1")
    if parity is None:
        parity = crc_parity_matrix(spec.info_count - crc.r, crc)
    status, msg = _scl(llr, spec.frozen_mask, spec.info_count, parity, int(list_size))
    return msg if status else None


class PolarCodec:
    """CRC attach + polar code + BPSK for one slot length, and the matching list decoder.

    Slot lengths that are not powers of two use the largest power-of-two block
    that fits; the remaining symbols of the slot are left at zero.
    """

    def __init__(self, message_bits, slot_length, crc=None, list_size=32, design_snr_db=2.0):
        self.crc = crc or CrcSpec()
        self.message_bits = int(message_bits)
        self.slot_length = int(slot_length)
        self.block_length = 1 << (self.slot_length.bit_length() - 1)
        k = self.message_bits + self.crc.r
        if k > self.block_length:
            raise ValueError(f"{k} info bits do not fit a {self.block_length}-bit polar block")
        self.spec = construct_code(self.block_length, k, design_snr_db)
        self.list_size = int(list_size)
        self.parity = crc_parity_matrix(self.message_bits, self.crc)

    def encode(self, message):
        message = np.asarray(message, dtype=np.uint8)
        if message.shape[-1] != self.message_bits:
            raise ValueError(f"expected {self.message_bits} message bits, got {message.shape[-1]}")
        info = np.concatenate([message, (message @ self.parity) & 1], axis=-1).astype(np.uint8)
        return polar_encode(info, self.spec)

    def modulate(self, message, amplitude):
        """Slot-length real signal: BPSK codeword followed by zero padding."""
        x = np.zeros(self.slot_length)
        x[: self.block_length] = bpsk_map(self.encode(message), amplitude)
        return x

    def decode(self, llr):
        llr = np.asarray(llr, dtype=np.float64)[: self.block_length]
        return scl_decode(llr, self.spec, self.crc, self.list_size, self.parity)
