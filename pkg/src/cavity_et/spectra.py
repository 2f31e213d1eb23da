"""Non-Hermitian eigensystems of the single-excitation blocks.

Two complex-symmetric blocks describe the excited manifold at M active
(ground-state) pairs:

* the 2x2 dark block over the {|D>, |A>} amplitudes of one quasi-momentum
  family,  [[-i*gamma/2, V], [V, delta - i*eta/2]],
  which is independent of both M and the quasi-momentum index, and

* the 3x3 bright block over {photon, symmetric donor, symmetric acceptor},
  [[-i*kappa/2, sqrt(M)*g, 0], [sqrt(M)*g, -i*gamma/2, V],
   [0, V, delta - i*eta/2]].

Right eigenvectors are unit-normalized with a deterministic phase; the
"inverse bras" are the rows of the inverted eigenvector matrix, so that
inv_rows @ vecs == identity.  Eigenvalues are ordered by descending real
part, ties broken by descending imaginary part; for the bright block this
assigns |+>, |X>, |-> in that order.

Near an exceptional point the eigenvector matrix becomes singular and the
biorthogonal overlaps meaningless; such cases raise ExceptionalPointError
instead of returning garbage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams

#: Condition-number threshold beyond which the biorthogonal inversion is
#: treated as an exceptional point.
COND_LIMIT = 1e12

#: Relative eigendecomposition-reconstruction residual marking a defective
#: matrix.  Needed alongside COND_LIMIT: at a true exceptional point the
#: eigensolver splits the coalesced pair at the sqrt(eps) level, leaving a
#: finite condition number (~1e8) but a reconstruction residual far above
#: the ~1e-15 of healthy systems.
DEFECT_LIMIT = 1e-10


class ExceptionalPointError(RuntimeError):
    """Eigenvectors (nearly) coalesced; biorthogonal system ill-defined."""

    def __init__(self, message, cond=None, gap=None, context=None):
        super().__init__(message)
        self.cond = cond
        self.gap = gap
        self.context = context


@dataclass(frozen=True)
class DarkEigensystem:
    """Biorthogonal system of the 2x2 dark block (M- and k-independent)."""

    eigvals: np.ndarray   # (2,), ordered [k+, k-]
    vecs: np.ndarray      # (2, 2), columns are right eigenvectors (alpha, beta)
    inv_rows: np.ndarray  # (2, 2), rows are inverse bras
    cond: float

    @property
    def e_kplus(self) -> complex:
        return complex(self.eigvals[0])

    @property
    def e_kminus(self) -> complex:
        return complex(self.eigvals[1])

    @property
    def amp_kplus(self) -> np.ndarray:
        return self.vecs[:, 0]

    @property
    def amp_kminus(self) -> np.ndarray:
        return self.vecs[:, 1]


@dataclass(frozen=True)
class BrightEigensystem:
    """Biorthogonal system of the 3x3 bright block at M ground pairs."""

    eigvals: np.ndarray   # (3,), ordered [+, X, -] by descending real part
    vecs: np.ndarray      # (3, 3), columns (alpha, beta, gamma) per state
    inv_rows: np.ndarray  # (3, 3)
    cond: float
    M: int

    @property
    def e_plus(self) -> complex:
        return complex(self.eigvals[0])

    @property
    def e_x(self) -> complex:
        return complex(self.eigvals[1])

    @property
    def e_minus(self) -> complex:
        return complex(self.eigvals[2])

    @property
    def amp(self) -> np.ndarray:
        """(alpha, beta, gamma) triples as columns, one per state."""
        return self.vecs


def dark_matrix(gamma, eta, delta, V) -> np.ndarray:
    """Assemble the 2x2 dark block; arguments may broadcast to a batch."""
    gamma, eta, delta, V = np.broadcast_arrays(gamma, eta, delta, V)
    A = np.zeros(gamma.shape + (2, 2), dtype=complex)
    A[..., 0, 0] = -0.5j * gamma
    A[..., 0, 1] = V
    A[..., 1, 0] = V
    A[..., 1, 1] = delta - 0.5j * eta
    return A


def bright_matrix(kappa, gamma, eta, delta, V, gc) -> np.ndarray:
    """Assemble the 3x3 bright block with collective coupling gc = sqrt(M)*g."""
    kappa, gamma, eta, delta, V, gc = np.broadcast_arrays(kappa, gamma, eta, delta, V, gc)
    A = np.zeros(kappa.shape + (3, 3), dtype=complex)
    A[..., 0, 0] = -0.5j * kappa
    A[..., 0, 1] = gc
    A[..., 1, 0] = gc
    A[..., 1, 1] = -0.5j * gamma
    A[..., 1, 2] = V
    A[..., 2, 1] = V
    A[..., 2, 2] = delta - 0.5j * eta
    return A


def solve_batch(A: np.ndarray):
    """Eigen-solve a (..., n, n) batch of small non-Hermitian matrices.

    Returns (eigvals, vecs, inv_rows, cond, defect), where ``defect`` is
    the relative residual of reconstructing A from the biorthogonal system.
    No exceptional-point check is performed here; callers inspect ``cond``
    and ``defect`` themselves.
    """
    w, U = np.linalg.eig(A)
    order = np.lexsort((-w.imag, -w.real))
    w = np.take_along_axis(w, order, axis=-1)
    U = np.take_along_axis(U, order[..., None, :], axis=-1)
    U = U / np.linalg.norm(U, axis=-2, keepdims=True)
    # Deterministic phase: largest-|.| component of each vector real positive.
    pivot_idx = np.argmax(np.abs(U), axis=-2, keepdims=True)
    pivot = np.take_along_axis(U, pivot_idx, axis=-2)
    phase = pivot / np.abs(pivot)
    U = U * np.conj(phase)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(U)
        try:
            Uinv = np.linalg.inv(U)
        except np.linalg.LinAlgError:
            # exactly defective somewhere in the batch: invert what can be
            # inverted, poison the rest (callers treat them as exceptional)
            flat = U.reshape(-1, U.shape[-2], U.shape[-1])
            Uinv = np.full_like(flat, np.nan)
            for i, block in enumerate(flat):
                try:
                    Uinv[i] = np.linalg.inv(block)
                except np.linalg.LinAlgError:
                    pass
            Uinv = Uinv.reshape(U.shape)
            cond = np.where(np.isfinite(cond) & np.isfinite(Uinv).all((-2, -1)),
                            cond, np.inf)
        scale = np.maximum(np.abs(A).max(axis=(-2, -1)), 1e-300)
        recon = (U * w[..., None, :]) @ Uinv
        defect = np.abs(recon - A).max(axis=(-2, -1)) / scale
        defect = np.where(np.isfinite(defect), defect, np.inf)
    return w, U, Uinv, cond, defect


def solve_small_nonhermitian(matrix: np.ndarray, cond_limit: float = COND_LIMIT):
    """Full biorthogonal system of one small (2x2 or 3x3) complex matrix.

    Returns (eigvals, vecs, inv_rows, cond); raises ExceptionalPointError
    when the eigenvector matrix condition number exceeds ``cond_limit`` or
    the biorthogonal system fails to reconstruct the matrix (a coalesced,
    defective eigenpair).
    """
    A = np.asarray(matrix, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (2, 3):
        raise ValueError(f"expected a 2x2 or 3x3 matrix, got shape {A.shape}")
    w, U, Uinv, cond, defect = solve_batch(A)
    if not np.isfinite(cond) or cond > cond_limit or defect > DEFECT_LIMIT:
        gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(len(w), 1)]
        raise ExceptionalPointError(
            f"(near-)defective eigensystem: condition number {cond:.3e}, "
            f"reconstruction residual {defect:.3e}, "
            f"minimal eigenvalue gap {gaps.min():.3e}",
            cond=float(cond),
            gap=float(gaps.min()),
        )
    return w, U, Uinv, float(cond)


def dark_block(params: ModelParams) -> DarkEigensystem:
    """Solve the dark block.  The result is independent of M by construction."""
    A = dark_matrix(params.gamma, params.eta, params.delta, params.V)
    try:
        w, U, Uinv, cond = solve_small_nonhermitian(A)
    except ExceptionalPointError as err:
        err.context = {"block": "dark", "params": params}
        raise
    return DarkEigensystem(eigvals=w, vecs=U, inv_rows=Uinv, cond=cond)


def bright_block(params: ModelParams, M: int) -> BrightEigensystem:
    """Solve the bright block at M >= 1 ground pairs."""
    if M < 1:
        raise ValueError(f"bright block requires M >= 1, got {M}")
    gc = params.g * np.sqrt(M)
    A = bright_matrix(params.kappa, params.gamma, params.eta, params.delta, params.V, gc)
    try:
        w, U, Uinv, cond = solve_small_nonhermitian(A)
    except ExceptionalPointError as err:
        err.context = {"block": "bright", "params": params, "M": M}
        raise
    return BrightEigensystem(eigvals=w, vecs=U, inv_rows=Uinv, cond=cond, M=int(M))
