"""Half-wavelength ULA geometry and the multi-user uplink with AWGN."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UserTransmission:
    """One active user as seen by the channel: arrival angle plus full-frame signal."""

    aoa: float
    signal: np.ndarray
    role: str = "communication"
    identity: int = -1


def wrap_aoa(theta):
    """Reduce normalized angles modulo 2 into [-1, 1)."""
    return (np.mod(np.asarray(theta, dtype=float) + 1.0, 2.0) - 1.0)[()]


def aoa_error(estimate, truth):
    """Signed angular error taken on the period-2 circle; magnitude at most 1."""
    return wrap_aoa(np.asarray(estimate, dtype=float) - np.asarray(truth, dtype=float))


def steering_vector(theta, m):
    """Array response ``[1, e^{-j pi theta}, ..., e^{-j pi (m-1) theta}]``.

    A scalar ``theta`` gives a length-``m`` vector; an array of K angles gives
    an ``m x K`` matrix with one steering vector per column.
    """
    k = np.arange(m)
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        return np.exp(-1j * np.pi * k * theta)
    return np.exp(-1j * np.pi * np.outer(k, theta))


def steering_derivative(theta, m):
    """Derivative of :func:`steering_vector` with respect to ``theta``."""
    k = np.arange(m)
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        return -1j * np.pi * k * np.exp(-1j * np.pi * k * theta)
    return (-1j * np.pi * k)[:, None] * np.exp(-1j * np.pi * np.outer(k, theta))


def f_e_kernel(x, m):
    """sum_{t<m} cos(t pi x), i.e. Re(b_0^H b_x)."""
    x = np.asarray(x, dtype=float)
    t = np.arange(m)
    return np.cos(np.pi * np.multiply.outer(x, t)).sum(axis=-1)[()]


def complex_noise(rng, shape, var):
    """Circularly symmetric complex Gaussian samples with per-entry variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_aoas(rng, size):
    """Uniform normalized arrival angles on [-1, 1)."""
    return rng.uniform(-1.0, 1.0, size)


def simulate_uplink(users, m, noise_var, rng, n=None):
    """Received matrix ``sum_j b_{theta_j} a_j + Z`` of shape ``m x n``.

    ``users`` is a sequence of :class:`UserTransmission`; ``n`` only needs to be
    given when there are no users.
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    lengths = {len(u.signal) for u in users}
    if len(lengths) > 1:
        raise ValueError(f"user signals have mismatched lengths {sorted(lengths)}")
    if users:
        n_users = lengths.pop()
        if n is not None and n != n_users:
            raise ValueError(f"frame length {n} does not match signal length {n_users}")
        n = n_users
    elif n is None:
        raise ValueError("frame length required when there are no users")
    y = complex_noise(rng, (m, n), noise_var)
    if users:
        b = steering_vector(np.array([u.aoa for u in users]), m)
        a = np.stack([np.asarray(u.signal, dtype=complex) for u in users])
        y += b @ a
    return y


def trial_rng(seed, index, stream=0):
    """Generator for trial ``index`` under master ``seed``.

    Streams are keyed by (seed, stream, index) through ``SeedSequence`` so each
    trial is reproducible on its own, whatever order or worker runs it.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


@dataclass(frozen=True)
class UlaConfig:
    m: int
    spacing: float = field(default=0.5, init=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("antenna count must be >= 1")
