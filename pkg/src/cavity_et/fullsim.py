"""Quantum-trajectory simulation of the complete master equation at small N.

Each active pair is a 3-level system {|G>, |D>, |A>}; relaxation into |F>
is treated as pair loss (the pair leaves the tensor product and all
operators are rebuilt), and the photon mode is hard-truncated at one
photon, so the pump operator maps the one-photon sector to zero.  With M
active pairs the state vector has dimension 2 * 3**M and basis encoding
code = ph * 3**M + sum_n digit_n * 3**n (digit 0/1/2 = G/D/A).

A trajectory alternates analytic ground-state waits with excited episodes:

* |G..G, 0_ph> is an eigenstate of the non-Hermitian Hamiltonian, so the
  wait until the next pump jump is T = -ln(p) / (kappa_plus + M*gamma_plus).
* Between jumps the non-Hermitian Hamiltonian conserves the excitation
  number m = n_ph + n_D + n_A, confining the state to a small sector
  (dimension 2M+1 at m = 1).  The default engine ("sector") diagonalizes
  the sector-restricted Hamiltonian once per (M, m) and propagates exactly
  in that eigenbasis; the jump time solves norm^2(tau) = p by safeguarded
  Newton iteration on the (monotone) squared norm, with no step-size
  quantization at all.
* A literal fixed-step engine ("rk4") - classic 4th-order steps of the
  sparse Hamiltonian action with dt = 0.01/kappa and bisection of the
  norm-threshold crossing to dt/64 - is kept as a cross-check engine.
  Its grid observables are sampled at step boundaries.

Observables are norm-corrected expectation values per trajectory; the
state vector is renormalized only at jumps.  Once every pair has been
lost and the system is back in its ground state, nothing observable
remains stochastic except the photon occupation of the pumped empty
cavity; the remaining grid points record its relaxation mean
kappa_plus/(kappa+kappa_plus) * (1 - exp(-(kappa+kappa_plus) dt)) instead
of simulating ~kappa_plus * t_max further empty pump cycles per
trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .model import ModelParams, validate

#: Hard dimension guard: 2 * 3**12 ~ 1.1e6 amplitudes.
MAX_PAIRS = 12

#: Fixed-step engine resolution, in units of 1/kappa.
DT_FACTOR = 0.01

_ENSEMBLE_CHUNK = 16


class EngineError(RuntimeError):
    """Trajectory engine failed (defective sector, norm underflow, ...)."""


# ---------------------------------------------------------------------------
# Basis bookkeeping.
# ---------------------------------------------------------------------------

_COUNTS_CACHE: dict = {}


def _basis_counts(M: int):
    """(ph, digits, nG, nD, nA) arrays over the full 2*3**M basis."""
    if M in _COUNTS_CACHE:
        return _COUNTS_CACHE[M]
    n3 = 3 ** M
    codes = np.arange(2 * n3)
    ph = (codes // n3).astype(np.uint8)
    trits = codes % n3
    digits = np.empty((M, 2 * n3), dtype=np.uint8)
    for n in range(M):
        digits[n] = (trits // 3 ** n) % 3
    nD = (digits == 1).sum(axis=0).astype(np.int32) if M else np.zeros(2 * n3, np.int32)
    nA = (digits == 2).sum(axis=0).astype(np.int32) if M else np.zeros(2 * n3, np.int32)
    nG = (M - nD - nA).astype(np.int32)
    _COUNTS_CACHE[M] = (ph, digits, nG, nD, nA)
    return _COUNTS_CACHE[M]


def _drop_trit(codes: np.ndarray, M: int, n: int) -> np.ndarray:
    """Remove pair n's trit from codes over M pairs (photon bit preserved)."""
    n3 = 3 ** M
    ph = codes // n3
    trits = codes % n3
    low = trits % 3 ** n
    high = trits // 3 ** (n + 1)
    return ph * 3 ** (M - 1) + high * 3 ** n + low


# ---------------------------------------------------------------------------
# Full-space operators (spec surface + rk4 engine).
# ---------------------------------------------------------------------------

@dataclass
class FullState:
    """Trajectory state over the active pairs' tensor product.

    ``norm`` is the squared norm, which decays monotonically between jumps.
    """

    amplitudes: np.ndarray
    active_pairs: tuple
    t: float

    @property
    def norm(self) -> float:
        return float(np.real(np.vdot(self.amplitudes, self.amplitudes)))

    @property
    def dim(self) -> int:
        return self.amplitudes.size


@dataclass(frozen=True)
class LindbladOp:
    """One jump channel: sqrt(rate/2) prefactors are folded into ``matrix``."""

    label: str
    kind: str          # "cavity_pump" | "cavity_decay" | "pair_pump" | "pair_decay" | "relax"
    pair: Optional[int]
    rate: float
    matrix: sp.csr_matrix


def _photon_ops(M: int):
    n3 = 3 ** M
    rows = np.arange(n3)
    a = sp.csr_matrix((np.ones(n3), (rows, rows + n3)), shape=(2 * n3, 2 * n3))
    return a, a.T.tocsr()


def _pair_transition(M: int, n: int, to_digit: int, from_digit: int) -> sp.csr_matrix:
    ph, digits, _, _, _ = _basis_counts(M)
    cols = np.nonzero(digits[n] == from_digit)[0]
    rows = cols + (to_digit - from_digit) * 3 ** n
    d = 2 * 3 ** M
    return sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(d, d))


def build_lindblad_set(params: ModelParams, active_pairs) -> list:
    """The 2 + 3M jump operators restricted to the active pairs.

    The relaxation channel is represented in-space as the acceptor
    projector's annihilating part; applying it through a jump removes the
    pair (see ``select_and_apply_jump``), which is how emission into |F>
    is bookkept.
    """
    M = len(active_pairs)
    a, adag = _photon_ops(M)
    ops = [
        LindbladOp("kappa_plus", "cavity_pump", None, params.kappa_plus,
                   np.sqrt(params.kappa_plus / 2.0) * adag),
        LindbladOp("kappa", "cavity_decay", None, params.kappa,
                   np.sqrt(params.kappa / 2.0) * a),
    ]
    for j, label in enumerate(active_pairs):
        ops.append(LindbladOp(f"gamma_plus[{label}]", "pair_pump", j, params.gamma_plus,
                              np.sqrt(params.gamma_plus / 2.0) * _pair_transition(M, j, 1, 0)))
        ops.append(LindbladOp(f"gamma[{label}]", "pair_decay", j, params.gamma,
                              np.sqrt(params.gamma / 2.0) * _pair_transition(M, j, 0, 1)))
        ops.append(LindbladOp(f"eta[{label}]", "relax", j, params.eta,
                              np.sqrt(params.eta / 2.0) * _pair_transition(M, j, 2, 2)))
    return ops


def hamiltonian_nonhermitian(params: ModelParams, M: int) -> sp.csr_matrix:
    """Sparse H - i sum_k L_k^dagger L_k over photon (x) M active pairs."""
    ph, digits, nG, nD, nA = _basis_counts(M)
    d = 2 * 3 ** M
    diag = (params.delta * nA
            - 0.5j * (params.kappa_plus * (1 - ph) + params.kappa * ph
                      + params.gamma_plus * nG + params.gamma * nD + params.eta * nA))
    H = sp.diags(diag.astype(complex), format="csr")
    for n in range(M):
        H = H + params.V * (_pair_transition(M, n, 2, 1) + _pair_transition(M, n, 1, 2))
    a, adag = _photon_ops(M)
    coupling = sp.csr_matrix((d, d), dtype=complex)
    for n in range(M):
        up = _pair_transition(M, n, 1, 0)
        coupling = coupling + up @ a + (up @ a).T
    return (H + params.g * coupling).tocsr()


def evolve_nonhermitian(params: ModelParams, state: FullState, dt: float,
                        H=None) -> FullState:
    """One classic 4th-order step of d psi/dt = -i H_nh psi (local error O(dt^5)).

    The norm is non-increasing for nonnegative rates; an underflow below
    1e-300 indicates broken jump bookkeeping and raises.  ``H`` may be the
    sparse Hamiltonian or a dense array (faster at small dimensions).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if H is None:
        H = hamiltonian_nonhermitian(params, len(state.active_pairs))
    psi = state.amplitudes
    k1 = -1j * (H @ psi)
    k2 = -1j * (H @ (psi + 0.5 * dt * k1))
    k3 = -1j * (H @ (psi + 0.5 * dt * k2))
    k4 = -1j * (H @ (psi + dt * k3))
    out = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    new = FullState(amplitudes=out, active_pairs=state.active_pairs, t=state.t + dt)
    if new.norm < 1e-300:
        raise EngineError("state norm underflow; jump bookkeeping is broken")
    return new


def ground_state_wait(params: ModelParams, M_active: int, p: float) -> float:
    """Analytic wait in the collective ground state: T = -ln(p)/l.

    l = kappa_plus + M_active * gamma_plus is the total squared-norm decay
    rate of |G..G, 0_ph> (the only state the Hamiltonian annihilates).
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    rate = params.kappa_plus + M_active * params.gamma_plus
    if rate <= 0.0:
        raise ValueError("kappa_plus and gamma_plus both vanish: no further jumps")
    return -math.log(p) / rate


def _jump_weights(params: ModelParams, M: int, amplitudes: np.ndarray) -> np.ndarray:
    """<psi| L_k^dagger L_k |psi> per channel, in build_lindblad_set order."""
    ph, digits, _, _, _ = _basis_counts(M)
    w2 = np.abs(amplitudes) ** 2
    weights = np.empty(2 + 3 * M)
    weights[0] = 0.5 * params.kappa_plus * w2[ph == 0].sum()
    weights[1] = 0.5 * params.kappa * w2[ph == 1].sum()
    for n in range(M):
        weights[2 + 3 * n] = 0.5 * params.gamma_plus * w2[digits[n] == 0].sum()
        weights[3 + 3 * n] = 0.5 * params.gamma * w2[digits[n] == 1].sum()
        weights[4 + 3 * n] = 0.5 * params.eta * w2[digits[n] == 2].sum()
    return weights


def _apply_channel(M: int, channel: int, amplitudes: np.ndarray):
    """Apply one jump channel; returns (new_amplitudes, lost_pair or None)."""
    ph, digits, _, _, _ = _basis_counts(M)
    n3 = 3 ** M
    codes = np.arange(2 * n3)
    if channel == 0:       # cavity pump a^dagger
        sel = ph == 0
        new_codes = codes[sel] + n3
        new_dim, lost = 2 * n3, None
    elif channel == 1:     # cavity decay a
        sel = ph == 1
        new_codes = codes[sel] - n3
        new_dim, lost = 2 * n3, None
    else:
        n, kind = divmod(channel - 2, 3)
        if kind == 0:      # pair pump |D><G|
            sel = digits[n] == 0
            new_codes = codes[sel] + 3 ** n
            new_dim, lost = 2 * n3, None
        elif kind == 1:    # pair decay |G><D|
            sel = digits[n] == 1
            new_codes = codes[sel] - 3 ** n
            new_dim, lost = 2 * n3, None
        else:              # relaxation to |F>: pair n leaves the product
            sel = digits[n] == 2
            new_codes = _drop_trit(codes[sel], M, n)
            new_dim, lost = 2 * 3 ** (M - 1), n
    out = np.zeros(new_dim, dtype=complex)
    out[new_codes] = amplitudes[sel]
    nrm = np.linalg.norm(out)
    if nrm == 0.0:
        raise EngineError("jump produced a null state")
    return out / nrm, lost


def select_and_apply_jump(params: ModelParams, state: FullState,
                          rng: np.random.Generator) -> FullState:
    """Draw a jump channel with probability ~ <L^dagger L> and apply it.

    If the relaxation channel fires on pair n, that pair is removed from
    the product (its record moves to |F>) and the dimension shrinks by a
    factor 3.
    """
    M = len(state.active_pairs)
    weights = _jump_weights(params, M, state.amplitudes)
    total = weights.sum()
    if total <= 0.0:
        raise EngineError("all jump weights vanish; no jump is possible")
    channel = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
    channel = min(channel, len(weights) - 1)
    out, lost = _apply_channel(M, channel, state.amplitudes)
    pairs = state.active_pairs
    if lost is not None:
        pairs = tuple(label for j, label in enumerate(pairs) if j != lost)
    return FullState(amplitudes=out, active_pairs=pairs, t=state.t)


# ---------------------------------------------------------------------------
# Sector tables (excitation number is conserved between jumps).
# ---------------------------------------------------------------------------

@dataclass
class _SectorTable:
    M: int
    m: int
    codes: np.ndarray      # sorted basis codes of the sector
    evals: np.ndarray
    vecs: np.ndarray       # right eigenvectors as columns
    inv: np.ndarray
    n_g: np.ndarray        # ground-pair count per basis state
    decay: np.ndarray      # squared-norm decay rate per basis state
    ph: np.ndarray
    digits: np.ndarray     # (M, d)
    weight_matrix: np.ndarray  # (2+3M, d): <L^dagger L> diagonals per channel
    jump_maps: dict        # channel -> (sel_idx, tgt_idx, new_M, new_m), lazy
    curves: dict           # basis index -> sampled norm-decay curve, lazy
    inject: np.ndarray     # m=1 only: basis indices of |1_ph>, |D_0..D_M-1>


class _SectorCache:
    def __init__(self, params: ModelParams):
        self.params = params
        self.tables: dict = {}

    def table(self, M: int, m: int) -> _SectorTable:
        key = (M, m)
        if key not in self.tables:
            self.tables[key] = self._build(M, m)
        return self.tables[key]

    def _build(self, M: int, m: int) -> _SectorTable:
        p = self.params
        ph_all, digits_all, nG_all, nD_all, nA_all = _basis_counts(M)
        n3 = 3 ** M
        sel = (ph_all.astype(int) + nD_all + nA_all) == m
        codes = np.nonzero(sel)[0]
        d = len(codes)
        if d == 0:
            raise EngineError(f"empty sector M={M}, m={m}")
        ph = ph_all[codes].astype(int)
        digits = digits_all[:, codes] if M else np.empty((0, d), np.uint8)
        nG, nD, nA = nG_all[codes], nD_all[codes], nA_all[codes]
        decay = (p.kappa_plus * (1 - ph) + p.kappa * ph
                 + p.gamma_plus * nG + p.gamma * nD + p.eta * nA)
        H = np.zeros((d, d), dtype=complex)
        H[np.arange(d), np.arange(d)] = p.delta * nA - 0.5j * decay
        for n in range(M):
            src = np.nonzero(digits[n] == 1)[0]
            if len(src):
                tgt = np.searchsorted(codes, codes[src] + 3 ** n)
                H[src, tgt] += p.V
                H[tgt, src] += p.V
            src = np.nonzero((ph == 1) & (digits[n] == 0))[0]
            if len(src):
                tgt = np.searchsorted(codes, codes[src] - n3 + 3 ** n)
                H[src, tgt] += p.g
                H[tgt, src] += p.g
        evals, vecs = np.linalg.eig(H)
        inv = np.linalg.inv(vecs)
        scale = max(np.max(np.abs(H)), 1e-30)
        recon = np.max(np.abs((vecs * evals) @ inv - H))
        if recon > 1e-8 * scale:
            raise EngineError(
                f"sector (M={M}, m={m}) is numerically defective "
                f"(reconstruction error {recon:.2e}); use engine='rk4'")
        wmat = np.empty((2 + 3 * M, d))
        wmat[0] = 0.5 * p.kappa_plus * (ph == 0)
        wmat[1] = 0.5 * p.kappa * (ph == 1)
        for n in range(M):
            wmat[2 + 3 * n] = 0.5 * p.gamma_plus * (digits[n] == 0)
            wmat[3 + 3 * n] = 0.5 * p.gamma * (digits[n] == 1)
            wmat[4 + 3 * n] = 0.5 * p.eta * (digits[n] == 2)
        inject = np.empty(0, dtype=int)
        if m == 1:
            pump_codes = np.array([n3] + [3 ** n for n in range(M)])
            inject = np.searchsorted(codes, pump_codes)
        return _SectorTable(M=M, m=m, codes=codes, evals=evals, vecs=vecs, inv=inv,
                            n_g=nG.astype(float), decay=decay.astype(float),
                            ph=ph, digits=digits, weight_matrix=wmat, jump_maps={},
                            curves={}, inject=inject)


def _sector_psi_at(tab: _SectorTable, coeff: np.ndarray, tau: float) -> np.ndarray:
    # callers run inside an errstate that ignores the benign underflow of
    # fast-decaying components
    return tab.vecs @ (coeff * np.exp(-1j * tab.evals * tau))


def _norm_curve(tab: _SectorTable, k: int):
    """Sampled ln ||psi(tau)||^2 for evolution out of basis state k.

    Built once per (sector, basis state); used only as an initial guess
    for the exact root-finder, so moderate resolution suffices.  Returns
    (x, y) with x = -ln(norm^2) increasing and y = ln(tau).
    """
    if k in tab.curves:
        return tab.curves[k]
    rates = -2.0 * tab.evals.imag
    s_max = max(rates.max(), 1e-30)
    s_min = max(rates[rates > 1e-14 * s_max].min() if np.any(rates > 1e-14 * s_max) else s_max,
                1e-30)
    taus = np.geomspace(1e-3 / s_max, 45.0 / s_min, 220)
    states = tab.vecs @ (tab.inv[:, k, None] * np.exp(-1j * tab.evals[:, None] * taus))
    n2 = np.maximum((np.abs(states) ** 2).sum(axis=0), 1e-300)
    x = -np.log(n2)
    # enforce strict monotonicity for interpolation (flat stretches at the
    # resolution limit collapse to single knots)
    keep = np.concatenate(([True], np.diff(x) > 0))
    tab.curves[k] = (x[keep], np.log(taus[keep]))
    return tab.curves[k]


def _find_jump_time(tab: _SectorTable, coeff: np.ndarray, p: float, t_cap: float,
                    bracket=None, n0: float = 1.0):
    """First tau with ||psi(tau)||^2 = p * n0, or (None, None, nan) past t_cap.

    The squared norm decreases monotonically (its derivative is minus the
    decay-weighted population), so a bracketed Newton iteration on its
    logarithm converges fast and cannot escape.  ``bracket`` is an optional
    (lo, hi) hint, e.g. the knots of a cached decay curve; it is verified
    and widened if stale.  Returns (tau, state, norm^2).
    """
    vecs, m1j_evals, decay = tab.vecs, -1j * tab.evals, tab.decay

    def probe(tau):
        v = vecs @ (coeff * np.exp(m1j_evals * tau))
        w2 = v.real ** 2 + v.imag ** 2
        return float(w2.sum()), v, w2

    target = p * n0
    log_target = math.log(target)
    if bracket is None:
        _, v0, w20 = probe(0.0)
        s0 = float(decay @ w20)
        hint = -math.log(p) * n0 / s0 if s0 > 0 else 1.0 / max(decay.max(), 1e-30)
        lo, hi = 0.0, min(max(hint, 1e-12), t_cap)
    else:
        lo, hi = max(bracket[0], 0.0), min(max(bracket[1], 1e-12), t_cap)
    n_hi, v_hi, w2_hi = probe(hi)
    while n_hi > target:
        if hi >= t_cap:
            return None, None, math.nan
        lo, hi = hi, min(hi * 1.6, t_cap)
        n_hi, v_hi, w2_hi = probe(hi)
    if lo > 0.0:
        n_lo, _, _ = probe(lo)
        if n_lo <= target:  # stale hint: root lies left of the bracket
            while lo > 0.0:
                hi = lo
                lo = 0.0 if lo < 1e-12 else lo / 4.0
                n_lo, _, _ = probe(lo) if lo > 0.0 else (math.inf, None, None)
                if n_lo > target:
                    break
            n_hi, v_hi, w2_hi = probe(hi)
    tau, n_tau, v_tau, w2_tau = hi, n_hi, v_hi, w2_hi
    for _ in range(60):
        if n_tau > 0.0 and abs(math.log(n_tau) - log_target) < 1e-10:
            return tau, v_tau, n_tau
        s = float(decay @ w2_tau)
        if s <= 0.0 or n_tau <= 0.0:
            step_to = 0.5 * (lo + hi)
        else:
            step_to = tau + (math.log(n_tau) - log_target) * (n_tau / s)
            if not lo < step_to < hi:
                step_to = 0.5 * (lo + hi)
        n_new, v_new, w2_new = probe(step_to)
        if n_new > target:
            lo = step_to
        else:
            hi = step_to
        tau, n_tau, v_tau, w2_tau = step_to, n_new, v_new, w2_new
        if hi - lo <= 1e-12 * hi:
            break
    if n_tau <= target:
        return tau, v_tau, n_tau
    n_hi, v_hi, _ = probe(hi)
    return hi, v_hi, n_hi


# ---------------------------------------------------------------------------
# Trajectory records and engines.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FullTrajectory:
    t_grid: np.ndarray
    n_g: np.ndarray
    n_e: np.ndarray
    n_f: np.ndarray
    n_jumps: int


@dataclass(frozen=True)
class FullSimEnsemble:
    t_grid: np.ndarray
    mean_NG: np.ndarray
    stderr_NG: np.ndarray
    mean_Ne: np.ndarray
    mean_NF: np.ndarray
    stderr_NF: np.ndarray
    n_trajectories: int
    seed: int


class _Recorder:
    def __init__(self, t_grid: np.ndarray):
        self.t_grid = t_grid
        self.times = t_grid.tolist()
        self.n = len(t_grid)
        self.i = 0
        self.n_g = np.empty(len(t_grid))
        self.n_e = np.empty(len(t_grid))
        self.n_f = np.empty(len(t_grid))

    @property
    def done(self) -> bool:
        return self.i >= self.n

    def constant_until(self, t_end: float, ng: float, ne: float, nf: float,
                       inclusive: bool = False):
        g = self.t_grid
        while self.i < len(g) and (g[self.i] <= t_end if inclusive else g[self.i] < t_end):
            self.n_g[self.i] = ng
            self.n_e[self.i] = ne
            self.n_f[self.i] = nf
            self.i += 1

    def sample_until(self, t_start: float, t_end: float, state_at, ng_of, ne: float, nf: float):
        g = self.t_grid
        while self.i < len(g) and g[self.i] <= t_end:
            v = state_at(g[self.i] - t_start)
            w2 = np.abs(v) ** 2
            nrm = w2.sum()
            self.n_g[self.i] = ng_of(w2) / nrm
            self.n_e[self.i] = ne
            self.n_f[self.i] = nf
            self.i += 1


def _run_sector_trajectory(params: ModelParams, cache: _SectorCache, N: int,
                           t_grid: np.ndarray, rng: np.random.Generator) -> FullTrajectory:
    with np.errstate(under="ignore"):
        return _run_sector_trajectory_inner(params, cache, N, t_grid, rng)


def _run_sector_trajectory_inner(params: ModelParams, cache: _SectorCache, N: int,
                                 t_grid: np.ndarray, rng: np.random.Generator) -> FullTrajectory:
    rec = _Recorder(t_grid)
    grid_times = rec.times
    n_grid = rec.n
    t_last = grid_times[-1]
    random = rng.random
    kappa_plus = params.kappa_plus
    gamma_plus = params.gamma_plus
    M, m = N, 0
    psi = None
    basis_k = None  # set when the state is exactly one sector basis vector
    t = 0.0
    n_jumps = 0
    while rec.i < n_grid:
        if m == 0:
            pump = kappa_plus + M * gamma_plus
            if pump <= 0.0:
                rec.constant_until(np.inf, float(M), 0.0, float(N - M))
                break
            if M == 0:
                # Pumped empty cavity: record the relaxation mean of the
                # photon number instead of simulating empty pump cycles.
                k_tot = params.kappa + kappa_plus
                p1 = kappa_plus / k_tot
                remaining = rec.t_grid[rec.i:]
                rec.n_g[rec.i:] = 0.0
                rec.n_f[rec.i:] = float(N)
                rec.n_e[rec.i:] = p1 * (1.0 - np.exp(-k_tot * np.maximum(remaining - t, 0.0)))
                rec.i = n_grid
                break
            T = -math.log(1.0 - random()) / pump
            t_next = t + T
            if rec.i < n_grid and grid_times[rec.i] < t_next:
                rec.constant_until(t_next, float(M), 0.0, float(N - M))
            t = t_next
            u = random() * pump
            tab = cache.table(M, 1)
            if u < kappa_plus:
                basis_k = int(tab.inject[0])   # |G..G, 1_ph>
            else:
                n = min(int((u - kappa_plus) / gamma_plus), M - 1)
                basis_k = int(tab.inject[1 + n])  # |D_n, 0_ph>
            psi = None
            m = 1
            n_jumps += 1
        else:
            tab = cache.table(M, m)
            if basis_k is not None:
                coeff = tab.inv[:, basis_k]
            else:
                coeff = tab.inv @ psi
            p = 1.0 - random()
            bracket = None
            if basis_k is not None:
                x, y = _norm_curve(tab, basis_k)
                idx = int(np.searchsorted(x, -math.log(p)))
                if idx <= 0:
                    bracket = (0.0, math.exp(y[0]))
                elif idx >= len(x):
                    bracket = (math.exp(y[-1]), 2.0 * math.exp(y[-1]))
                else:
                    bracket = (math.exp(y[idx - 1]), math.exp(y[idx]))
            t_cap = t_last - t
            tau, v_end, n_end = (_find_jump_time(tab, coeff, p, t_cap, bracket)
                                 if t_cap > 0 else (None, None, math.nan))
            t_stop = t + tau if tau is not None else t_last
            if rec.i < n_grid and grid_times[rec.i] <= t_stop:
                rec.sample_until(t, t_stop,
                                 lambda dt_: _sector_psi_at(tab, coeff, dt_),
                                 lambda w2: float(tab.n_g @ w2),
                                 float(m), float(N - M))
            if tau is None:
                break
            t = t_stop
            psi = v_end / math.sqrt(n_end)
            basis_k = None
            weights = (tab.weight_matrix @ (v_end.real ** 2 + v_end.imag ** 2)).tolist()
            total = math.fsum(weights)
            if total <= 0.0:
                raise EngineError("all jump weights vanish in an excited sector")
            u = random() * total
            acc = 0.0
            channel = len(weights) - 1
            for k, wk in enumerate(weights):
                acc += wk
                if u < acc:
                    channel = k
                    break
            M, m, psi = _sector_apply_jump(cache, tab, channel, psi)
            n_jumps += 1
    return FullTrajectory(t_grid=t_grid, n_g=rec.n_g, n_e=rec.n_e, n_f=rec.n_f,
                          n_jumps=n_jumps)


def _sector_jump_weights(tab: _SectorTable, psi: np.ndarray) -> np.ndarray:
    return tab.weight_matrix @ np.abs(psi) ** 2


def _sector_jump_map(cache: _SectorCache, tab: _SectorTable, channel: int):
    """(sel_idx, tgt_idx, new_M, new_m) of one jump channel, cached lazily."""
    if channel in tab.jump_maps:
        return tab.jump_maps[channel]
    M, m = tab.M, tab.m
    n3 = 3 ** M
    if channel == 0:
        sel = np.nonzero(tab.ph == 0)[0]
        new_codes = tab.codes[sel] + n3
        new_M, new_m = M, m + 1
    elif channel == 1:
        sel = np.nonzero(tab.ph == 1)[0]
        new_codes = tab.codes[sel] - n3
        new_M, new_m = M, m - 1
    else:
        n, kind = divmod(channel - 2, 3)
        if kind == 0:
            sel = np.nonzero(tab.digits[n] == 0)[0]
            new_codes = tab.codes[sel] + 3 ** n
            new_M, new_m = M, m + 1
        elif kind == 1:
            sel = np.nonzero(tab.digits[n] == 1)[0]
            new_codes = tab.codes[sel] - 3 ** n
            new_M, new_m = M, m - 1
        else:
            sel = np.nonzero(tab.digits[n] == 2)[0]
            new_codes = _drop_trit(tab.codes[sel], M, n)
            new_M, new_m = M - 1, m - 1
    if new_m == 0:
        tgt = None
    else:
        tgt = np.searchsorted(cache.table(new_M, new_m).codes, new_codes)
    tab.jump_maps[channel] = (sel, tgt, new_M, new_m)
    return tab.jump_maps[channel]


def _sector_apply_jump(cache: _SectorCache, tab: _SectorTable, channel: int, psi: np.ndarray):
    """Map a sector state through one jump channel; returns (M', m', psi')."""
    sel, tgt, new_M, new_m = _sector_jump_map(cache, tab, channel)
    amp = psi[sel]
    nrm2 = float(np.vdot(amp, amp).real)
    if nrm2 == 0.0:
        raise EngineError("jump produced a null state")
    if new_m == 0:
        return new_M, 0, None
    out = np.zeros(len(cache.table(new_M, new_m).codes), dtype=complex)
    out[tgt] = amp / math.sqrt(nrm2)
    return new_M, new_m, out


def _run_rk4_trajectory(params: ModelParams, N: int, t_grid: np.ndarray,
                        rng: np.random.Generator) -> FullTrajectory:
    """Reference fixed-step engine; grid samples are step-quantized."""
    rec = _Recorder(t_grid)
    dt = DT_FACTOR / params.kappa
    hams: dict = {}
    state = FullState(amplitudes=None, active_pairs=tuple(range(N)), t=0.0)
    M = N
    ground_code = 0
    t = 0.0
    n_jumps = 0
    while not rec.done:
        pump = params.kappa_plus + M * params.gamma_plus
        if pump <= 0.0:
            rec.constant_until(np.inf, float(M), 0.0, float(N - M))
            break
        T = ground_state_wait(params, M, 1.0 - rng.random())
        rec.constant_until(t + T, float(M), 0.0, float(N - M))
        t += T
        if rec.done:
            break
        # pump jump out of the ground state
        psi = np.zeros(2 * 3 ** M, dtype=complex)
        psi[ground_code] = 1.0
        state = FullState(amplitudes=psi, active_pairs=state.active_pairs, t=t)
        u = rng.random() * pump
        if u < params.kappa_plus:
            channel = 0
        else:
            channel = 2 + 3 * min(int((u - params.kappa_plus) / params.gamma_plus), M - 1)
        amp, lost = _apply_channel(M, channel, state.amplitudes)
        state = FullState(amplitudes=amp, active_pairs=state.active_pairs, t=t)
        n_jumps += 1
        # excited episode: step until norm^2 crosses the threshold
        while True:
            M = len(state.active_pairs)
            if M not in hams:
                H_sp = hamiltonian_nonhermitian(params, M)
                # dense action is faster than sparse below ~1k amplitudes
                hams[M] = H_sp.toarray() if H_sp.shape[0] <= 1024 else H_sp
            H = hams[M]
            ph, digits, nG, nD, nA = _basis_counts(M)
            ne_op = (ph.astype(float) + nD + nA)
            p = 1.0 - rng.random()
            crossed = False
            while not crossed:
                prev = state
                state = evolve_nonhermitian(params, state, dt, H=H)
                if rec.i < len(t_grid) and t_grid[rec.i] <= state.t:
                    w2 = np.abs(state.amplitudes) ** 2
                    nrm = w2.sum()
                    rec.constant_until(state.t, float(nG @ w2 / nrm),
                                       float(ne_op @ w2 / nrm), float(N - M),
                                       inclusive=True)
                    if rec.done:
                        return FullTrajectory(t_grid=t_grid, n_g=rec.n_g, n_e=rec.n_e,
                                              n_f=rec.n_f, n_jumps=n_jumps)
                if state.norm < p:
                    crossed = True
            # bisect the crossing inside the last step to dt/64
            lo_state, span = prev, dt
            for _ in range(6):
                span *= 0.5
                mid = evolve_nonhermitian(params, lo_state, span, H=H)
                if mid.norm >= p:
                    lo_state = mid
            state = lo_state
            state = FullState(amplitudes=state.amplitudes / math.sqrt(state.norm),
                              active_pairs=state.active_pairs, t=state.t)
            state = select_and_apply_jump(params, state, rng)
            n_jumps += 1
            t = state.t
            M = len(state.active_pairs)
            ph, digits, nG, nD, nA = _basis_counts(M)
            w2 = np.abs(state.amplitudes) ** 2
            excitation = float((ph.astype(float) + nD + nA) @ w2)
            if excitation < 1e-12:
                break  # back to the collective ground state
    return FullTrajectory(t_grid=t_grid, n_g=rec.n_g, n_e=rec.n_e, n_f=rec.n_f,
                          n_jumps=n_jumps)


def run_full_trajectory(params: ModelParams, t_grid, seed,
                        engine: str = "sector") -> FullTrajectory:
    """Simulate one trajectory and record N_G, N_e, N_F on ``t_grid``."""
    validate(params)
    if params.N_total > MAX_PAIRS:
        raise ValueError(f"full simulation is capped at N <= {MAX_PAIRS} pairs "
                         f"(dimension 2*3^N); got N={params.N_total}")
    t_grid = np.asarray(t_grid, dtype=float)
    rng = np.random.default_rng(seed)
    if engine == "sector":
        cache = _process_cache(params)
        return _run_sector_trajectory(params, cache, params.N_total, t_grid, rng)
    if engine == "rk4":
        return _run_rk4_trajectory(params, params.N_total, t_grid, rng)
    raise ValueError(f"unknown engine {engine!r}")


_WORKER_CACHES: dict = {}


def _process_cache(params: ModelParams) -> _SectorCache:
    """One sector cache per (process, parameter set); chunks reuse it."""
    key = (params.g, params.kappa, params.kappa_plus, params.gamma,
           params.gamma_plus, params.eta, params.delta, params.V, params.N_total)
    if key not in _WORKER_CACHES:
        _WORKER_CACHES[key] = _SectorCache(params)
    return _WORKER_CACHES[key]


def _ensemble_chunk(args):
    params, t_grid, seed, n_total, start, stop, engine = args
    cache = _process_cache(params) if engine == "sector" else None
    s = np.zeros(len(t_grid))
    s2 = np.zeros(len(t_grid))
    se = np.zeros(len(t_grid))
    sf = np.zeros(len(t_grid))
    sf2 = np.zeros(len(t_grid))
    rng_factory = np.random.default_rng
    for i in range(start, stop):
        # i-th child of SeedSequence(seed), constructed without spawning
        # the whole family in every chunk
        rng = rng_factory(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        if engine == "sector":
            traj = _run_sector_trajectory(params, cache, params.N_total, t_grid, rng)
        else:
            traj = _run_rk4_trajectory(params, params.N_total, t_grid, rng)
        s += traj.n_g
        s2 += traj.n_g ** 2
        se += traj.n_e
        sf += traj.n_f
        sf2 += traj.n_f ** 2
    return start, s, s2, se, sf, sf2


def run_full_ensemble(params: ModelParams, n_trajectories: int, seed: int, t_grid,
                      workers: Optional[int] = None,
                      engine: str = "sector") -> FullSimEnsemble:
    """Trajectory ensemble with deterministic, scheduling-independent reduction.

    Per-trajectory seeds come from counter-based spawning of ``seed``;
    partial sums are accumulated in fixed chunks and combined in chunk
    order, so the output is identical for any worker count.
    """
    validate(params)
    if params.N_total > MAX_PAIRS:
        raise ValueError(f"full simulation is capped at N <= {MAX_PAIRS} pairs; "
                         f"got N={params.N_total}")
    if n_trajectories < 2:
        raise ValueError("need at least 2 trajectories")
    t_grid = np.asarray(t_grid, dtype=float)
    chunks = [(params, t_grid, seed, n_trajectories, start,
               min(start + _ENSEMBLE_CHUNK, n_trajectories), engine)
              for start in range(0, n_trajectories, _ENSEMBLE_CHUNK)]
    if workers is None or workers <= 1 or len(chunks) == 1:
        results = [_ensemble_chunk(c) for c in chunks]
    else:
        with get_context("fork").Pool(processes=workers) as pool:
            results = pool.map(_ensemble_chunk, chunks, chunksize=1)
    results.sort(key=lambda r: r[0])
    s = np.zeros(len(t_grid))
    s2 = np.zeros(len(t_grid))
    se = np.zeros(len(t_grid))
    sf = np.zeros(len(t_grid))
    sf2 = np.zeros(len(t_grid))
    for _, cs, cs2, cse, csf, csf2 in results:
        s += cs
        s2 += cs2
        se += cse
        sf += csf
        sf2 += csf2
    n = n_trajectories
    mean = s / n
    var = np.maximum(s2 - n * mean * mean, 0.0) / (n - 1)
    mean_f = sf / n
    var_f = np.maximum(sf2 - n * mean_f * mean_f, 0.0) / (n - 1)
    return FullSimEnsemble(t_grid=t_grid, mean_NG=mean, stderr_NG=np.sqrt(var / n),
                           mean_Ne=se / n, mean_NF=mean_f, stderr_NF=np.sqrt(var_f / n),
                           n_trajectories=n, seed=seed)
