"""Iterative receiver: communication phase (I-SIC, peak search, list decoding), C-SIC,
energy-detection sensing phase with S-SIC, and LS + successive interval refinement for AOAs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import steering_vector, wrap_aoa
from .numerics import SingularGramError, ls_fit, project_residual
from .tx import FrameLayout

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6  # sigma_IN^2 clamp, relative to P_c


def search_grid(lo, hi, count):
    """F(lo, hi, count): ``count`` equally spaced points including both ends."""
    return np.linspace(lo, hi, count)


def direction_energy(y, thetas):
    """E_theta = ||Re(b_theta^H Y)||^2 via the M x M sample covariances.

    With R1 = Y Y^H and R2 = Y Y^T:  E = (b^H R1 b + Re(b^H R2 conj(b))) / 2.
    """
    b = steering_vector(np.atleast_1d(thetas), y.shape[0])
    r1 = y @ y.conj().T
    r2 = y @ y.T
    e1 = np.einsum("iq,ij,jq->q", b.conj(), r1, b).real
    e2 = np.einsum("iq,ij,jq->q", b.conj(), r2, b.conj()).real
    return 0.5 * (e1 + e2)


def direction_energy_direct(y, thetas):
    b = steering_vector(np.atleast_1d(thetas), y.shape[0])
    return np.sum(np.real(b.conj().T @ y) ** 2, axis=1)


def comm_llr(y, theta, p_c, n_code=None):
    """LLR vector 2 sqrt(P_c) a_hat / sigma_IN^2 with a_hat = Re(b^H Y) / M."""
    m = y.shape[0]
    soft = np.real(steering_vector(theta, m).conj() @ y) / m
    n_code = soft.size if n_code is None else n_code
    sig2 = np.sum(soft[:n_code] ** 2) / n_code - p_c
    sig2 = max(sig2, VAR_FLOOR * p_c)
    return 2.0 * np.sqrt(p_c) * soft / sig2


def sir_estimate(b_hat, n_points=65, n_steps=4):
    """Successive interval refinement of argmax Re(b_theta^H b_hat), one estimate per column."""
    b_hat = np.atleast_2d(np.asarray(b_hat, dtype=complex).T).T  # M x K
    m, k = b_hat.shape
    ant = np.arange(m)
    base = search_grid(-1.0, 1.0, n_points)
    grid = np.broadcast_to(base, (k, n_points))
    est = np.zeros(k)
    for step in range(n_steps):
        if step:
            half = (2.0 / n_points) ** step
            grid = est[:, None] + np.linspace(-half, half, n_points)[None, :]
        # Re(sum_a e^{j pi a theta} b_hat[a])
        phase = np.exp(1j * np.pi * grid[:, :, None] * ant[None, None, :])
        score = np.real(np.einsum("kqa,ak->kq", phase, b_hat))
        est = grid[np.arange(k), np.argmax(score, axis=1)]
    return wrap_aoa(est)


@dataclass
class DetectionReport:
    messages: list = field(default_factory=list)  # uint8 arrays
    comm_slots: list = field(default_factory=list)
    sensing_pairs: list = field(default_factory=list)  # (row, slot)
    aoas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    truncated: bool = False

    def message_keys(self):
        return {(s, m.tobytes()) for s, m in zip(self.comm_slots, self.messages)}


@dataclass
class RxState:
    decoded: list  # per comm slot: list of (message bits, real signal row)
    detected: list  # per sensing slot: list of codeword rows
    y_s: np.ndarray  # residual after S-SIC, input to the communication phase
    y_c: np.ndarray  # residual after C-SIC, input to sensing and LS
    iteration: int = 0

    @property
    def total_decoded(self):
        return sum(len(d) for d in self.decoded)

    def comm_key(self):
        return frozenset((i, m.tobytes()) for i, d in enumerate(self.decoded) for m, _ in d)

    def sens_key(self):
        return frozenset((r, t) for t, d in enumerate(self.detected) for r in d)


class Receiver:
    """Algorithm-level receiver bound to one configuration, power pair, codec and codebook."""

    def __init__(self, cfg, p_c, p_s, codec, codebook):
        self.cfg = cfg
        self.layout = FrameLayout.from_config(cfg)
        self.p_c, self.p_s = float(p_c), float(p_s)
        self.codec = codec
        self.codebook = codebook
        self._row_scale = np.sqrt(self.p_s / codebook.power) if codebook is not None else 1.0
        self.grid = search_grid(-1.0, 1.0, cfg.q_grid)
        self._grid_b = steering_vector(self.grid, cfg.m)

    # -- communication phase ------------------------------------------------
    def _peak(self, y):
        r1 = y @ y.conj().T
        r2 = y @ y.T
        b = self._grid_b
        e = 0.5 * (np.einsum("iq,ij,jq->q", b.conj(), r1, b).real
                   + np.einsum("iq,ij,jq->q", b.conj(), r2, b.conj()).real)
        return self.grid[int(np.argmax(e))]

    def comm_phase_slot(self, state, i):
        sl = self.layout.comm_slot(i)
        y_in = state.y_s[:, sl]
        decoded = state.decoded[i]
        amp = np.sqrt(self.p_c)
        while state.total_decoded < self.cfg.k_c:
            if decoded:
                try:
                    y = project_residual(y_in, np.stack([s for _, s in decoded]))
                except SingularGramError as exc:
                    log.warning("slot %d: dropping dependent decoded signal (%s)", i, exc)
                    decoded.pop()
                    break
            else:
                y = y_in
            theta = self._peak(y)
            llr = comm_llr(y, theta, self.p_c, self.codec.block_length)
            msg = self.codec.decode(llr)
            if msg is None:
                break
            if any(np.array_equal(msg, m) for m, _ in decoded):
                break
            decoded.append((msg, self.codec.modulate(msg, amp)))

    def c_sic(self, y, state):
        out = y.copy()
        for i, dec in enumerate(state.decoded):
            if dec:
                sl = self.layout.comm_slot(i)
                out[:, sl] = project_residual(y[:, sl], np.stack([s for _, s in dec]))
        return out

    # -- sensing phase --------------------------------------------------------
    def _signals(self, rows):
        return np.stack([self.codebook.row(r) for r in rows]) * self._row_scale

    def sensing_energies(self, y_c):
        """S_s x 2^B_s matrix of ||Y'_{c,t} a_r^H||^2."""
        out = np.empty((self.layout.s_s, self.codebook.size))
        for t in range(self.layout.s_s):
            yt = y_c[:, self.layout.sens_slot(t)]
            for start, block in self.codebook.iter_chunks():
                g = yt @ block.conj().T
                out[t, start : start + len(block)] = np.sum(np.abs(g) ** 2, axis=0)
        return out

    def sensing_phase(self, y, state):
        k_s = self.cfg.k_s
        detected = [[] for _ in range(self.layout.s_s)]
        if k_s:
            e = self.sensing_energies(state.y_c).ravel()
            k = min(k_s, e.size)
            top = np.argpartition(-e, k - 1)[:k]
            top = top[np.lexsort((top, -e[top]))]
            for flat in top:
                t, r = divmod(int(flat), self.codebook.size)
                detected[t].append(r)
        state.detected = detected
        y_s = y.copy()
        for t, rows in enumerate(detected):
            if rows:
                sl = self.layout.sens_slot(t)
                y_s[:, sl] = project_residual(y[:, sl], self._signals(rows))
        state.y_s = y_s

    # -- AOA estimation -------------------------------------------------------
    def estimate_aoas(self, state):
        pairs, est = [], []
        for t, rows in enumerate(state.detected):
            if not rows:
                continue
            b_hat = ls_fit(state.y_c[:, self.layout.sens_slot(t)], self._signals(rows))
            est.append(sir_estimate(b_hat, self.cfg.n_sir, self.cfg.n_sir_steps))
            pairs += [(r, t) for r in rows]
        return pairs, (np.concatenate(est) if est else np.zeros(0))

    # -- driver ---------------------------------------------------------------
    def run(self, y):
        state = RxState([[] for _ in range(self.layout.s_c)], [[] for _ in range(self.layout.s_s)], y, y)
        prev_comm = None
        truncated = True
        for it in range(1, self.cfg.max_iter + 1):
            state.iteration = it
            for i in range(self.layout.s_c):
                self.comm_phase_slot(state, i)
            comm = state.comm_key()
            if comm == prev_comm:
                # identical decoded set gives an identical C-SIC residual, hence identical detections
                truncated = False
                break
            prev_comm = comm
            state.y_c = self.c_sic(y, state)
            self.sensing_phase(y, state)
        if truncated:
            log.info("receiver stopped at the iteration cap (%d)", self.cfg.max_iter)
        pairs, aoas = self.estimate_aoas(state)
        return DetectionReport(
            messages=[m for dec in state.decoded for m, _ in dec],
            comm_slots=[i for i, dec in enumerate(state.decoded) for _ in dec],
            sensing_pairs=pairs,
            aoas=aoas,
            iterations=state.iteration,
            truncated=truncated,
        )


def run_receiver(y, cfg, p_c, p_s, codec, codebook):
    return Receiver(cfg, p_c, p_s, codec, codebook).run(y)


def run_tin_practical(y, cfg, p_c, p_s, codec, codebook):
    """Single-slot receiver that treats interference as noise: one list decode per grid angle,
    energy detection on the raw signal, and correlation-based steering estimates."""
    if cfg.s_c != 1 or cfg.s_s != 1:
        raise ValueError("TIN-practical assumes one communication and one sensing slot")
    messages = []
    seen = set()
    for theta in search_grid(-1.0, 1.0, cfg.q_tin):
        msg = codec.decode(comm_llr(y, theta, p_c, codec.block_length))
        if msg is not None and msg.tobytes() not in seen:
            seen.add(msg.tobytes())
            messages.append(msg)
    pairs, aoas = [], np.zeros(0)
    if cfg.k_s:
        rx = Receiver(cfg, p_c, p_s, codec, codebook)
        e = rx.sensing_energies(y)[0]
        k = min(cfg.k_s, e.size)
        top = np.argpartition(-e, k - 1)[:k]
        top = top[np.lexsort((top, -e[top]))]
        sig = rx._signals([int(r) for r in top])
        b_hat = (y @ sig.conj().T) / np.sum(np.abs(sig) ** 2, axis=1)
        aoas = sir_estimate(b_hat, cfg.n_sir, cfg.n_sir_steps)
        pairs = [(int(r), 0) for r in top]
    return DetectionReport(messages, [0] * len(messages), pairs, aoas, iterations=1, truncated=False)
