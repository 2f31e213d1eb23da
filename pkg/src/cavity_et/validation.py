"""Cross-checks wiring the fast rate path against its brute-force references.

Each check returns a CheckResult; the CLI ``validate`` command prints one
line per check and the test suite asserts on the same functions, so a
single implementation backs both surfaces.

The position-space reference here evaluates the transfer-rate double sum
over *all* eigenstates of the full (2M+1)-dimensional excited manifold,
with localized donor/acceptor coefficients and no quasi-momentum
reduction.  Splitting that sum into bright/dark/cross blocks verifies the
two structural identities the fast path relies on: bright-dark cross
terms cancel, and the dark-dark block equals a single quasi-momentum
family weighted by M^2 (M-1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle, rates, spectra
from .model import ModelParams, validate
from .overlaps import overlap_table
from .spectra import ExceptionalPointError


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_params(rng: np.random.Generator, n_pairs: int = 4) -> ModelParams:
    """Random draw used across the validation suites.

    Rates are log-uniform in [1e-4, 1]; detuning and tunneling are uniform
    in [-0.5, 0.5].
    """
    lo, hi = np.log(1e-4), np.log(1.0)
    g, kappa, kappa_plus, gamma, gamma_plus, eta = np.exp(rng.uniform(lo, hi, 6))
    delta, V = rng.uniform(-0.5, 0.5, 2)
    return validate(ModelParams(g=g, kappa=kappa, kappa_plus=kappa_plus, gamma=gamma,
                                gamma_plus=gamma_plus, eta=eta, delta=delta, V=V,
                                N_total=n_pairs))


def position_space_channels(params: ModelParams, M: int):
    """(bright, dark, cross) complex channel sums from the full manifold.

    Bright states are identified by matching eigenvalues against the 3x3
    block; the remaining 2(M-1) states are dark.  Includes the same
    overall elimination sign as the fast path.
    """
    block = oracle.excited_block(params, M)
    E, U = np.linalg.eig(block.h_matrix)
    Uinv = np.linalg.inv(U)
    d = 2 * M + 1

    c_ph = Uinv[:, 0]
    c_D = Uinv[:, 1:1 + M]              # (state, pair)
    cbar_A = U[1 + M:, :].T             # (state, pair)
    G = 1.0 / (1j * np.conj(E)[:, None] - 1j * E[None, :])
    pump = (params.kappa_plus * np.conj(c_ph)[:, None] * c_ph[None, :]
            + params.gamma_plus * (np.conj(c_D) @ c_D.T))
    sink = params.eta * (np.conj(cbar_A) @ cbar_A.T)
    terms = -pump * G * sink

    bright_vals = spectra.bright_block(params, M).eigvals
    is_bright = np.zeros(d, dtype=bool)
    for e in bright_vals:
        gaps = np.where(is_bright, np.inf, np.abs(E - e))
        is_bright[int(np.argmin(gaps))] = True
    bb = terms[np.ix_(is_bright, is_bright)].sum()
    dd = terms[np.ix_(~is_bright, ~is_bright)].sum()
    cross = terms.sum() - bb - dd
    return bb, dd, cross


def check_eigen_quality(n_draws: int = 1000, seed: int = 2024) -> CheckResult:
    """Residuals and biorthogonality of both blocks across random draws."""
    rng = np.random.default_rng(seed)
    worst_res = 0.0
    worst_bio = 0.0
    for _ in range(n_draws):
        p = random_params(rng)
        M = int(rng.integers(1, 50))
        for A in (spectra.dark_matrix(p.gamma, p.eta, p.delta, p.V),
                  spectra.bright_matrix(p.kappa, p.gamma, p.eta, p.delta, p.V,
                                        p.g * np.sqrt(M))):
            w, U, Uinv, _ = spectra.solve_small_nonhermitian(A)
            scale = np.linalg.norm(A, 2)
            res = np.linalg.norm(A @ U - U * w, axis=0).max() / scale
            bio = np.abs(Uinv @ U - np.eye(len(w))).max()
            worst_res = max(worst_res, float(res))
            worst_bio = max(worst_bio, float(bio))
    ok = worst_res < 1e-12 and worst_bio < 1e-12
    return CheckResult("eigen-quality", ok,
                       f"worst residual {worst_res:.2e}, worst biorthogonality {worst_bio:.2e} "
                       f"over {n_draws} draws (tolerance 1e-12)")


def check_channel_identities(seed: int = 2025) -> CheckResult:
    """Cross-term cancellation and dark-channel reduction for M = 2..6."""
    rng = np.random.default_rng(seed)
    worst_cross = 0.0
    worst_dark = 0.0
    for M in range(2, 7):
        for _ in range(4):
            p = random_params(rng, n_pairs=M)
            bb, dd, cross = position_space_channels(p, M)
            bright_sys = spectra.bright_block(p, M)
            dark_sys = spectra.dark_block(p)
            table = overlap_table(bright_sys, dark_sys)
            dark_fast = rates.dark_channel(p, M, table, dark_sys)
            r_tot = rates.transfer_rate(p, M).r_tot
            worst_cross = max(worst_cross, abs(cross) / abs(r_tot))
            worst_dark = max(worst_dark, abs(dd - dark_fast) / max(abs(dd), 1e-300))
    ok = worst_cross < 1e-10 and worst_dark < 1e-10
    return CheckResult("channel-identities", ok,
                       f"worst |cross|/r_tot {worst_cross:.2e}, "
                       f"worst dark-reduction mismatch {worst_dark:.2e} (tolerance 1e-10)")


def check_oracle_equivalence(n_draws: int = 20, seed: int = 2026) -> CheckResult:
    """Reduced-formula rate vs superoperator linear solve, M = 1..4."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        for M in (1, 2, 3, 4):
            p = random_params(rng, n_pairs=M)
            r_fast = rates.transfer_rate(p, M).r_tot
            r_ref = oracle.brute_force_rate(p, M)
            worst = max(worst, abs(r_fast - r_ref) / abs(r_ref))
    ok = worst < 1e-8
    return CheckResult("oracle-equivalence", ok,
                       f"worst relative deviation {worst:.2e} over {n_draws} draws x M=1..4 "
                       f"(tolerance 1e-8)")


def check_linearity(seed: int = 2027) -> CheckResult:
    """r_tot splits linearly into the kappa_plus and gamma_plus channels."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        M = int(rng.integers(1, 30))
        p = random_params(rng, n_pairs=max(M, 1))
        full = rates.transfer_rate(p, M)
        cav_only = rates.transfer_rate(p.replace(gamma_plus=0.0), M)
        ind_only = rates.transfer_rate(p.replace(kappa_plus=0.0), M)
        split = abs(full.r_tot - (cav_only.r_tot + ind_only.r_tot)) / full.r_tot
        decomp = abs(full.r_tot - (full.r_cav + full.r_ind)) / full.r_tot
        worst = max(worst, split, decomp)
    ok = worst < 1e-12
    return CheckResult("pump-linearity", ok,
                       f"worst relative split error {worst:.2e} (tolerance 1e-12)")


def check_breakdown(params: ModelParams, M: int | None = None) -> CheckResult:
    """Per-config sanity: finite breakdown obeying its own invariants."""
    M = params.N_total if M is None else M
    try:
        b = rates.transfer_rate(params, M)
    except ExceptionalPointError as err:
        return CheckResult("config-breakdown", False, f"exceptional point: {err}")
    issues = []
    if not np.isfinite(b.r_tot):
        issues.append("r_tot not finite")
    if b.r_tot < -1e-12 or b.r_cav < -1e-12 or b.r_ind < -1e-12 or b.r_bare < -1e-12:
        issues.append("negative rate beyond roundoff")
    if abs(b.r_tot - (b.r_cav + b.r_ind)) > 1e-12 * max(b.r_tot, 1e-300):
        issues.append("r_tot != r_cav + r_ind")
    if b.imag_residual > 1e-10 * max(b.r_tot, 1e-300):
        issues.append(f"imaginary residual {b.imag_residual:.2e}")
    return CheckResult("config-breakdown", not issues,
                       "; ".join(issues) if issues else
                       f"r_tot={b.r_tot:.6e}, r_cav/r_bare="
                       f"{b.r_cav / b.r_bare if b.r_bare else float('nan'):.3f} at M={M}")


def run_all(params: ModelParams | None = None) -> list:
    results = [
        check_eigen_quality(),
        check_channel_identities(),
        check_oracle_equivalence(),
        check_linearity(),
    ]
    if params is not None:
        results.append(check_breakdown(params))
    return results
