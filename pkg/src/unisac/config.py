"""Scenario configuration shared by the transceiver, bounds, baselines and harness."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields

from .polar import CCITT16, CrcSpec


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violated constraint."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class SystemConfig:
    n: int = 1024
    m: int = 5
    k_c: int = 10  # active communication users |A_c|
    k_s: int = 10  # active sensing users |A_s|
    b_c: int = 100
    b_s: int = 13
    s_c: int = 1
    s_s: int = 1
    ebn0_db: float = 10.0
    power_ratio: float = 1.0  # per-user energy ratio E_s / E_c
    noise_var: float = 1.0
    q_grid: int = 1024
    n_sir: int = 65
    n_sir_steps: int = 4
    list_size: int = 32
    crc_bits: int = 16
    crc_poly: int = CCITT16
    design_snr_db: float = 2.0
    max_iter: int = 20
    trials: int = 200
    seed: int = 0
    eps_target: float = 0.1
    delta_target: float = 5e-4
    n_theta: int = 2048
    mc_trials: int = 1000
    q_tin: int = 64

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self):
        out = []
        for name in ("n", "m", "b_c", "b_s", "s_c", "s_s", "q_grid", "n_sir", "n_sir_steps", "list_size",
                     "crc_bits", "max_iter", "trials", "n_theta", "mc_trials", "q_tin"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1 (got {getattr(self, name)})")
        for name in ("k_c", "k_s", "seed"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if self.n >= 1 and self.s_c >= 1 and self.n % self.s_c:
            out.append(f"s_c={self.s_c} does not divide n={self.n}")
        if self.n >= 1 and self.s_s >= 1 and self.n % self.s_s:
            out.append(f"s_s={self.s_s} does not divide n={self.n}")
        if self.noise_var <= 0:
            out.append("noise_var must be positive")
        if self.power_ratio <= 0:
            out.append("power_ratio must be positive")
        if not 0 < self.eps_target:
            out.append("eps_target must be positive")
        if self.delta_target <= 0:
            out.append("delta_target must be positive")
        if self.b_s > 24:
            out.append(f"b_s={self.b_s} exceeds the in-memory codebook cap of 24 bits")
        if self.n >= 1 and self.s_c >= 1 and self.n % self.s_c == 0:
            block = 1 << ((self.n // self.s_c).bit_length() - 1)
            if self.b_c + self.crc_bits > block:
                out.append(f"b_c + crc_bits = {self.b_c + self.crc_bits} exceeds polar block {block}")
        if self.crc_bits >= 1 and (self.crc_poly >> self.crc_bits != 1 or not self.crc_poly & 1):
            out.append(f"crc_poly 0x{self.crc_poly:x} is not a degree-{self.crc_bits} generator")
        return out

    # derived quantities
    @property
    def n_c(self):
        return self.n // self.s_c

    @property
    def n_s(self):
        return self.n // self.s_s

    @property
    def k_total(self):
        return self.k_c + self.k_s

    @property
    def crc(self):
        return CrcSpec(self.crc_bits, self.crc_poly)

    @property
    def powers(self):
        """Per-symbol (P_c, P_s) that realize ``ebn0_db`` under the per-user energy definition."""
        return powers_for_ebn0(self, self.ebn0_db)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def digest(self):
        """Short stable hash of every field, for provenance columns."""
        text = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def per_user_energy(p_c, p_s, k_c, k_s, n_c, n_s, noise_var):
    """Average per-user energy over noise, (P_c K_c n_c + P_s K_s n_s) / (K sigma^2), linear."""
    k = k_c + k_s
    if k == 0:
        raise ValueError("per-user energy undefined without active users")
    return (p_c * k_c * n_c + p_s * k_s * n_s) / (k * noise_var)


def split_powers(ebn0_db, k_c, k_s, n_c, n_s, noise_var, ratio=1.0):
    """Per-symbol (P_c, P_s) with per-user energies E_s = ratio * E_c hitting the given E/N0."""
    e_c = 10.0 ** (ebn0_db / 10.0) * noise_var * (k_c + k_s) / (k_c + ratio * k_s)
    return e_c / n_c, ratio * e_c / n_s


def powers_for_ebn0(cfg, ebn0_db, n_c=None, n_s=None):
    n_c = cfg.n_c if n_c is None else n_c
    n_s = cfg.n_s if n_s is None else n_s
    return split_powers(ebn0_db, cfg.k_c, cfg.k_s, n_c, n_s, cfg.noise_var, cfg.power_ratio)


_FIELD_TYPES = {f.name: f.type for f in fields(SystemConfig)}


def _coerce(name, text):
    kind = _FIELD_TYPES[name]
    if kind in ("int", int):
        return int(text, 0)
    if kind in ("float", float):
        v = float(text)
        if math.isnan(v):
            raise ValueError("NaN not allowed")
        return v
    return text


def parse_config(text, base=None):
    """Flat ``key = value`` lines with ``#`` comments; unknown keys are errors."""
    values = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _coerce(key, val)
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {key}: {exc}")
    if problems:
        raise ConfigError(problems)
    return dataclasses.replace(base, **values) if base else SystemConfig(**values)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def dump_config(cfg):
    return "".join(f"{name} = {getattr(cfg, name)}\n" for name in _FIELD_TYPES)
