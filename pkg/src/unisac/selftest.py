"""Fast invariant checks runnable without the test suite (``unisac selftest``)."""

from __future__ import annotations

import math

import numpy as np

from .channel import f_e_kernel, steering_vector
from .numerics import chi2_cdf, project_residual, qfunc
from .polar import CrcSpec, PolarCodec, crc_attach, crc_check


def _projection(rng):
    a = rng.standard_normal((3, 40)) + 1j * rng.standard_normal((3, 40))
    y = rng.standard_normal((4, 40)) + 1j * rng.standard_normal((4, 40))
    r = project_residual(y, a)
    return max(np.abs(project_residual(r, a) - r).max(), np.abs(r @ a.conj().T).max()) < 1e-9


def _steering(rng):
    th = rng.uniform(-1, 1, 16)
    b1, b2 = steering_vector(th, 6), steering_vector(th + 2.0, 6)
    x, t = rng.uniform(-1, 1, 2)
    inner = np.vdot(steering_vector(x, 6), steering_vector(t, 6)).real
    return np.abs(b1 - b2).max() < 1e-12 and abs(inner - f_e_kernel(x - t, 6)) < 1e-12


def _polar(rng):
    codec = PolarCodec(20, 64, list_size=8)
    msg = rng.integers(0, 2, 20, dtype=np.uint8)
    llr = 20.0 * codec.modulate(msg, 1.0)
    out = codec.decode(llr)
    frame = crc_attach(msg, CrcSpec())
    frame[3] ^= 1
    return out is not None and np.array_equal(out, msg) and not crc_check(frame, CrcSpec())


def _special(_rng):
    xs = np.array([0.1, 1.0, 7.5, 30.0])
    ok = np.abs(chi2_cdf(xs, 2) - (1 - np.exp(-xs / 2))).max() < 1e-8
    return ok and all(abs(qfunc(x) - 0.5 * math.erfc(x / math.sqrt(2))) < 1e-8 for x in (-2.0, 0.0, 1.3, 5.0))


CHECKS = {
    "projection idempotence and orthogonality": _projection,
    "steering periodicity and f_e kernel": _steering,
    "polar round trip and CRC flip": _polar,
    "chi-square and Q closed forms": _special,
}


def run(seed=0, stream=None):
    rng = np.random.default_rng(seed)
    failed = 0
    for name, fn in CHECKS.items():
        ok = bool(fn(rng))
        failed += not ok
        if stream is not None:
            print(f"{'PASS' if ok else 'FAIL'}  {name}", file=stream)
    return failed
