"""Stochastic simulation of the eliminated rate equation.

After eliminating the photon and the excited pair states, the dynamics is a
pure-death jump process on the number M of ground-state pairs: no coherent
part survives, so a trajectory is nothing but an ordered list of N jump
times.  Starting from M = N, the wait before the i-th jump is exponential
with the instantaneous total rate r(N - i + 1), giving

    t_i = t_{i-1} - ln(p_i) / r(N - i + 1),   p_i uniform in (0, 1).

The state between jumps is stored as the integer count alone; per-pair
identities are irrelevant because the rate depends only on M.  Trajectories
are seeded from a base seed through counter-based seed spawning, so any
subset can be reproduced independently of execution order, and ensemble
reductions accumulate in fixed chunk order so results do not depend on how
work was scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .rates import RateTable

_CHUNK = 64  # fixed reduction granularity; keeps sums scheduling-independent


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Aggregated <N_G>(t) statistics plus (optionally) the raw jump times."""

    t_grid: np.ndarray
    mean_NG: np.ndarray
    stderr_NG: np.ndarray
    n_trajectories: int
    seed: int
    jump_times: Optional[list] = None  # one strictly increasing (N,) array each


def default_time_grid(t_min: float = 1e2, t_max: float = 1e9, n: int = 200) -> np.ndarray:
    """Log-spaced evaluation grid matching the decade ranges of the figures."""
    return np.geomspace(t_min, t_max, n)


def _rates_from_table(table) -> np.ndarray:
    if isinstance(table, RateTable):
        if table.flag_ep.any():
            bad = int(table.M[np.argmax(table.flag_ep)])
            raise ValueError(f"rate table has an exceptional-point gap at M={bad}")
        rates = table.r_tot
    else:
        rates = np.asarray(table, dtype=float)
    if rates.ndim != 1 or len(rates) < 1:
        raise ValueError("need a 1d table of rates r(M) for M = 1..N")
    if not np.all(np.isfinite(rates)) or np.any(rates <= 0.0):
        bad = int(np.argmax(~(np.isfinite(rates) & (rates > 0.0)))) + 1
        raise ValueError(f"rate r(M={bad}) is not positive; the jump process stalls")
    return rates


def jump_times_from_uniforms(rates: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Deterministic map from N uniforms in (0, 1) to the N jump times.

    ``rates[m-1]`` is r(M=m); the i-th wait uses r(N - i + 1) since each
    jump removes exactly one pair from the ground state.
    """
    rates = np.asarray(rates, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape != rates.shape:
        raise ValueError(f"need one uniform per jump: {p.shape} vs {rates.shape}")
    waits = -np.log(p) / rates[::-1]
    return np.cumsum(waits)


def sample_trajectory(table, rng: np.random.Generator) -> np.ndarray:
    """Draw one trajectory's jump times from a table covering M = 1..N."""
    rates = _rates_from_table(table)
    # 1 - random() lies in (0, 1]; -log of it is the exponential wait.
    p = 1.0 - rng.random(len(rates))
    return jump_times_from_uniforms(rates, p)


def ground_state_counts(jump_times: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    """N_G(t) = N - #{jumps <= t} for one trajectory, evaluated on a grid."""
    n = len(jump_times)
    return n - np.searchsorted(jump_times, t_grid, side="right")


def ensemble_stats(trajectories, t_grid: np.ndarray):
    """Pointwise mean and standard error of N_G(t) over >= 2 trajectories."""
    t_grid = np.asarray(t_grid, dtype=float)
    count = 0
    s = np.zeros(len(t_grid))
    s2 = np.zeros(len(t_grid))
    for jumps in trajectories:
        ng = ground_state_counts(np.asarray(jumps), t_grid).astype(float)
        s += ng
        s2 += ng * ng
        count += 1
    if count < 2:
        raise ValueError("ensemble statistics need at least 2 trajectories")
    mean = s / count
    var = np.maximum(s2 - count * mean * mean, 0.0) / (count - 1)
    stderr = np.sqrt(var / count)
    return mean, stderr


def run_ensemble(table, n_trajectories: int, seed: int, t_grid=None,
                 keep_times: bool = True) -> TrajectoryEnsemble:
    """Sample an ensemble and aggregate <N_G>(t).

    Sampling is vectorized in fixed chunks; with per-trajectory spawned
    seeds the result is byte-identical for a given (seed, n_trajectories)
    regardless of chunking.
    """
    rates = _rates_from_table(table)
    if t_grid is None:
        t_grid = default_time_grid()
    t_grid = np.asarray(t_grid, dtype=float)
    if n_trajectories < 2:
        raise ValueError("need at least 2 trajectories")

    seeds = np.random.SeedSequence(seed).spawn(n_trajectories)
    count = 0
    s = np.zeros(len(t_grid))
    s2 = np.zeros(len(t_grid))
    kept = [] if keep_times else None
    for start in range(0, n_trajectories, _CHUNK):
        stop = min(start + _CHUNK, n_trajectories)
        for i in range(start, stop):
            jumps = sample_trajectory(rates, np.random.default_rng(seeds[i]))
            ng = ground_state_counts(jumps, t_grid).astype(float)
            s += ng
            s2 += ng * ng
            count += 1
            if keep_times:
                kept.append(jumps)
    mean = s / count
    var = np.maximum(s2 - count * mean * mean, 0.0) / (count - 1)
    return TrajectoryEnsemble(
        t_grid=t_grid,
        mean_NG=mean,
        stderr_NG=np.sqrt(var / count),
        n_trajectories=n_trajectories,
        seed=seed,
        jump_times=kept,
    )


def mean_ground_population(table, t_grid) -> np.ndarray:
    """Deterministic <N_G>(t) of the pure-death chain (no sampling noise).

    Solves the (N+1)-state population chain exactly through the matrix
    exponential; intended for small N (oracle comparisons), not for
    N ~ 1e4 where the trajectory ensemble is the tool.
    """
    rates = _rates_from_table(table)
    n = len(rates)
    if n > 400:
        raise ValueError("chain solution intended for small N; use run_ensemble")
    t_grid = np.asarray(t_grid, dtype=float)
    # generator on populations p_M, M = 0..N: d p_M = -r(M) p_M + r(M+1) p_{M+1}
    A = np.zeros((n + 1, n + 1))
    for m in range(1, n + 1):
        A[m, m] = -rates[m - 1]
        A[m - 1, m] = rates[m - 1]
    p0 = np.zeros(n + 1)
    p0[n] = 1.0
    out = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        p = expm(A * t) @ p0
        out[k] = np.dot(np.arange(n + 1), p)
    return out
