"""Instantaneous electron-transfer rate and its channel decomposition.

The net rate at which pairs hop from |G> to |F> when M pairs remain in the
ground state is a double sum over excited eigenstates psi, phi:

    r(M) = -Re sum_{psi,phi} [pump weight]_{psi,phi}
                             * G(E_psi, E_phi)
                             * [eta sink weight]_{psi,phi}

with the excited-manifold propagator G(E_psi, E_phi) = 1/(i*conj(E_psi)
- i*E_phi).  On the diagonal, G is minus the lifetime of the state, so the
overall minus sign - inherited from the second-order elimination of the
fast manifold - makes the rate positive.  Bright-dark cross terms cancel
identically and the dark-dark block collapses to a single quasi-momentum
family with weight M^2 (M - 1), so each evaluation costs O(1) once the two
small eigensystems are known.

The pump weight is linear in kappa_plus (photon injection, bright states
only) and gamma_plus (per-pair injection, all states), which yields the
exact channel split used throughout:

    r_tot = r_cav + r_ind,  r_cav: gamma_plus -> 0,  r_ind: kappa_plus -> 0,
    r_bare: kappa_plus -> 0 and g -> 0 (no cavity at all).

r_cav depends on the pair count only through gc = sqrt(M)*g, so it is
invariant under M -> c*M, g -> g/sqrt(c).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectra
from .model import ModelParams, validate
from .overlaps import OverlapTable, overlap_table
from .spectra import (
    COND_LIMIT,
    BrightEigensystem,
    DarkEigensystem,
    ExceptionalPointError,
    bright_block,
    bright_matrix,
    dark_block,
    dark_matrix,
    solve_batch,
)


@dataclass(frozen=True)
class RateBreakdown:
    """Total transfer rate at fixed ground-state count M and its channels.

    ``imag_residual`` is the magnitude of the imaginary part of the complex
    channel sum before the real part is taken; the sum is real in exact
    arithmetic (conjugate-symmetric summands), so the residual certifies
    the implementation rather than being discarded silently.
    """

    M: int
    r_tot: float
    r_cav: float
    r_ind: float
    r_bare: float
    imag_residual: float


@dataclass(frozen=True)
class RateTable:
    """Vectorized breakdowns for M = 1..N; exceptional points are flagged."""

    M: np.ndarray            # (N,), values 1..N
    r_tot: np.ndarray
    r_cav: np.ndarray
    r_ind: np.ndarray
    r_bare: np.ndarray
    imag_residual: np.ndarray
    flag_ep: np.ndarray      # bool; True rows carry NaN rates

    def breakdown(self, M: int) -> RateBreakdown:
        i = int(M) - 1
        if not 0 <= i < len(self.M):
            raise IndexError(f"M={M} outside table range 1..{len(self.M)}")
        if self.flag_ep[i]:
            raise ExceptionalPointError(f"table entry M={M} sits at an exceptional point")
        return RateBreakdown(
            M=int(self.M[i]),
            r_tot=float(self.r_tot[i]),
            r_cav=float(self.r_cav[i]),
            r_ind=float(self.r_ind[i]),
            r_bare=float(self.r_bare[i]),
            imag_residual=float(self.imag_residual[i]),
        )


def propagator(e_psi: complex, e_phi: complex) -> complex:
    """Excited-manifold propagator element 1/(i*conj(E_psi) - i*E_phi).

    For e_psi == e_phi this is minus the state's lifetime, -1/(2|Im E|).
    A vanishing denominator can only occur between two non-decaying states
    and is rejected.
    """
    denom = 1j * np.conj(e_psi) - 1j * e_phi
    if denom == 0:
        raise ZeroDivisionError(
            f"propagator undefined for non-decaying pair E_psi={e_psi}, E_phi={e_phi}"
        )
    return 1.0 / denom


def bright_channel(params: ModelParams, M: int, table: OverlapTable,
                   sys: BrightEigensystem) -> complex:
    """Complex transfer contribution of the three bright states (9 terms).

    Includes the overall elimination minus sign, so the real part is the
    physical (nonnegative) rate contribution.
    """
    total = 0.0 + 0.0j
    for i in range(3):
        for j in range(3):
            pump = (params.kappa_plus * np.conj(table.c_ph[i]) * table.c_ph[j]
                    + params.gamma_plus * M * np.conj(table.ctilde_D0[i]) * table.ctilde_D0[j])
            sink = params.eta * M * np.conj(table.cbartilde_A0[i]) * table.cbartilde_A0[j]
            total += pump * propagator(sys.eigvals[i], sys.eigvals[j]) * sink
    return -total


def dark_channel(params: ModelParams, M: int, table: OverlapTable,
                 sys: DarkEigensystem) -> complex:
    """Complex transfer contribution of the 2(M-1) dark states (4 terms).

    The quasi-momentum families are degenerate, so the sum over k collapses
    to one family with weight M^2 (M - 1); it vanishes at M = 1 together
    with the dark manifold.  Dark states carry no photon weight, so only
    the per-pair pump contributes.
    """
    if M < 2:
        return 0.0 + 0.0j
    total = 0.0 + 0.0j
    weight = M * M * (M - 1)
    for i in range(2):
        for j in range(2):
            pump = params.gamma_plus * np.conj(table.ctilde_Dk[i]) * table.ctilde_Dk[j]
            sink = params.eta * np.conj(table.cbartilde_Ak[i]) * table.cbartilde_Ak[j]
            total += weight * pump * propagator(sys.eigvals[i], sys.eigvals[j]) * sink
    return -total


def transfer_rate(params: ModelParams, M: int) -> RateBreakdown:
    """Rate breakdown at M >= 1 ground pairs (scalar reference path).

    r_cav and r_ind reuse the same eigensystems with one pump zeroed;
    r_bare re-solves the bright block at g = 0 through the same code path
    so all channels share one set of conventions.
    """
    validate(params)
    if M < 1:
        raise ValueError(f"transfer_rate requires M >= 1, got {M}")
    bright = bright_block(params, M)
    dark = dark_block(params) if M >= 2 else None
    table = overlap_table(bright, dark)

    cav = bright_channel(params.replace(gamma_plus=0.0), M, table, bright)
    ind = bright_channel(params.replace(kappa_plus=0.0), M, table, bright)
    if M >= 2:
        ind += dark_channel(params, M, table, dark)

    bare_params = params.replace(kappa_plus=0.0, g=0.0)
    bright0 = bright_block(bare_params, M)
    table0 = overlap_table(bright0, dark)
    bare = bright_channel(bare_params, M, table0, bright0)
    if M >= 2:
        bare += dark_channel(bare_params, M, table0, dark)

    total = cav + ind
    return RateBreakdown(
        M=int(M),
        r_tot=float(total.real),
        r_cav=float(cav.real),
        r_ind=float(ind.real),
        r_bare=float(bare.real),
        imag_residual=float(abs(total.imag)),
    )


# ---------------------------------------------------------------------------
# Vectorized evaluation over grids (rate tables and parameter sweeps).
# ---------------------------------------------------------------------------

def _bright_factors(kappa, gamma, eta, delta, V, gc, M):
    """Per-unit-pump complex sums over the bright block, batched.

    Returns (C_ph, C_D_bright, bad): r_cav = kappa_plus * Re(C_ph) and the
    bright part of r_ind is gamma_plus * Re(C_D_bright).  ``bad`` marks
    exceptional points or non-decaying states.
    """
    A = bright_matrix(kappa, gamma, eta, delta, V, gc)
    w, U, Uinv, cond, defect = solve_batch(A)
    denom = 1j * np.conj(w)[..., :, None] - 1j * w[..., None, :]
    bad = (~np.isfinite(cond) | (cond > COND_LIMIT) | (defect > spectra.DEFECT_LIMIT)
           | np.any(denom == 0, axis=(-2, -1)))
    with np.errstate(all="ignore"):
        G = 1.0 / denom
        c_ph = Uinv[..., :, 0]
        # M * conj(ctilde_D0) ctilde_D0 == conj(inv_rows[:,1]) inv_rows[:,1]
        cD = Uinv[..., :, 1]
        # eta * M * conj(cbartilde_A0) cbartilde_A0 == eta conj(gamma_amp) gamma_amp
        gam_amp = U[..., 2, :]
        sink = eta[..., None, None] * np.conj(gam_amp)[..., :, None] * gam_amp[..., None, :]
        C_ph = -np.sum(np.conj(c_ph)[..., :, None] * c_ph[..., None, :] * G * sink, axis=(-2, -1))
        C_D = -np.sum(np.conj(cD)[..., :, None] * cD[..., None, :] * G * sink, axis=(-2, -1))
    return C_ph, C_D, bad


def _dark_factor(gamma, eta, delta, V, M):
    """Per-unit-gamma_plus complex sum over the dark manifold, batched."""
    A = dark_matrix(gamma, eta, delta, V)
    w, W, Winv, cond, defect = solve_batch(A)
    denom = 1j * np.conj(w)[..., :, None] - 1j * w[..., None, :]
    bad = (~np.isfinite(cond) | (cond > COND_LIMIT) | (defect > spectra.DEFECT_LIMIT)
           | np.any(denom == 0, axis=(-2, -1)))
    with np.errstate(all="ignore"):
        G = 1.0 / denom
        # M^2 (M-1) with the 1/sqrt(M) in each of the four coefficients
        # leaves an overall (M-1).
        tD = Winv[..., :, 0]
        bA = W[..., 1, :]
        core = -np.sum(np.conj(tD)[..., :, None] * tD[..., None, :] * G
                       * eta[..., None, None]
                       * np.conj(bA)[..., :, None] * bA[..., None, :], axis=(-2, -1))
    Mf = np.asarray(M, dtype=float)
    C_dark = np.where(Mf >= 2, (Mf - 1.0) * core, 0.0 + 0.0j)
    bad = bad & (Mf >= 2)
    return C_dark, bad


def grid_breakdowns(kappa, kappa_plus, gamma, gamma_plus, eta, delta, V, g, M):
    """Evaluate the rate breakdown over broadcastable parameter arrays.

    All inputs broadcast together; M may be fractional only in the sense of
    float storage (values are pair counts).  Exceptional-point cells come
    back flagged with NaN rates rather than raising, so a sweep survives
    isolated degeneracies in its grid.

    Returns a dict of arrays: r_tot, r_cav, r_ind, r_bare, imag_residual,
    flag_ep.
    """
    (kappa, kappa_plus, gamma, gamma_plus, eta, delta, V, g, M) = [
        np.asarray(x, dtype=float)
        for x in np.broadcast_arrays(kappa, kappa_plus, gamma, gamma_plus, eta, delta, V, g, M)
    ]
    gc = g * np.sqrt(M)
    C_ph, C_Db, bad_b = _bright_factors(kappa, gamma, eta, delta, V, gc, M)
    _, C_Db0, bad_b0 = _bright_factors(kappa, gamma, eta, delta, V, np.zeros_like(gc), M)
    C_dark, bad_d = _dark_factor(gamma, eta, delta, V, M)

    C_D = C_Db + C_dark
    C_D0 = C_Db0 + C_dark
    cav = kappa_plus * C_ph
    ind = gamma_plus * C_D
    total = cav + ind
    flag = bad_b | bad_b0 | bad_d
    nan = np.where(flag, np.nan, 0.0)
    return {
        "r_tot": total.real + nan,
        "r_cav": cav.real + nan,
        "r_ind": ind.real + nan,
        "r_bare": (gamma_plus * C_D0).real + nan,
        "imag_residual": np.abs(total.imag) + nan,
        "flag_ep": flag,
    }


def rate_table(params: ModelParams, N: int) -> RateTable:
    """Breakdowns for every M in 1..N at O(N) total cost.

    The dark block is solved once (it is M-independent); the bright block
    is batch-diagonalized over all M.
    """
    validate(params)
    if N < 1:
        raise ValueError(f"rate_table requires N >= 1, got {N}")
    M = np.arange(1, N + 1, dtype=float)
    out = grid_breakdowns(params.kappa, params.kappa_plus, params.gamma,
                          params.gamma_plus, params.eta, params.delta,
                          params.V, params.g, M)
    return RateTable(
        M=M.astype(int),
        r_tot=out["r_tot"],
        r_cav=out["r_cav"],
        r_ind=out["r_ind"],
        r_bare=out["r_bare"],
        imag_residual=out["imag_residual"],
        flag_ep=out["flag_ep"],
    )
