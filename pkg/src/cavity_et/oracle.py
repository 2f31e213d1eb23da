"""Brute-force references, deliberately sharing no code with the fast path.

Two independent checks live here:

* ``brute_force_rate`` builds the single-excitation manifold in the
  position basis {photon, D_1..D_M, A_1..A_M}, forms the evolution
  superoperator -i(1 (x) h) + i(h* (x) 1) on its (2M+1)^2 matrix elements,
  solves it against the incoherent pump source and contracts the steady
  response with the acceptor decay sink.  No eigendecomposition, no
  quasi-momentum reduction - just a dense linear solve, capped at M <= 4.

* ``dense_lindblad_integrate`` evolves the complete density matrix of
  N <= 3 four-level pairs plus a photon mode (hard-truncated at one
  photon), validating the adiabatically eliminated dynamics itself, not
  merely the rate algebra.  For N <= 2 the Liouvillian (dimension <= 1024)
  is diagonalized once and evaluated exactly on the requested grid; N = 3
  falls back to adaptive Runge-Kutta on the 128x128 density matrix, which
  is only practical over short spans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams, validate

MAX_BRUTE_M = 4
MAX_DENSE_N = 3


@dataclass(frozen=True)
class ExcitedBlock:
    """Position-basis single-excitation manifold at M active pairs.

    Basis ordering: index 0 is the photon state, 1..M the localized donor
    excitations, M+1..2M the localized acceptor excitations.  ``h_matrix``
    is complex symmetric with sector-wise imaginary diagonals -kappa/2,
    -gamma/2, -eta/2.  ``source_weights`` carries the pump injection rates
    per basis state (kappa_plus on the photon, gamma_plus per donor);
    ``sink_weights`` carries eta per acceptor state.
    """

    h_matrix: np.ndarray
    source_weights: np.ndarray
    sink_weights: np.ndarray


def excited_block(params: ModelParams, M: int) -> ExcitedBlock:
    d = 2 * M + 1
    h = np.zeros((d, d), dtype=complex)
    h[0, 0] = -0.5j * params.kappa
    for n in range(M):
        h[0, 1 + n] = h[1 + n, 0] = params.g
        h[1 + n, 1 + n] = -0.5j * params.gamma
        h[1 + n, 1 + M + n] = h[1 + M + n, 1 + n] = params.V
        h[1 + M + n, 1 + M + n] = params.delta - 0.5j * params.eta
    source = np.zeros(d)
    source[0] = params.kappa_plus
    source[1:1 + M] = params.gamma_plus
    sink = np.zeros(d)
    sink[1 + M:] = params.eta
    return ExcitedBlock(h_matrix=h, source_weights=source, sink_weights=sink)


def brute_force_rate(params: ModelParams, M: int) -> float:
    """Transfer rate via explicit superoperator construction and linear solve.

    The pump populates the excited manifold at rates (kappa_plus, gamma_plus
    per pair); its quasi-steady response X solves
        -i (h X - X h^dagger) = -S,
    and the transfer rate is the acceptor-decay contraction
        r = eta * sum_n Re X[A_n, A_n].
    Linear in the source by construction.
    """
    validate(params)
    if not 1 <= M <= MAX_BRUTE_M:
        raise ValueError(f"brute_force_rate supports 1 <= M <= {MAX_BRUTE_M}, got {M}")
    block = excited_block(params, M)
    h = block.h_matrix
    d = h.shape[0]
    eye = np.eye(d)
    # Row-major vec convention: vec(A X B) = kron(A, B.T) vec(X).
    K = -1j * (np.kron(h, eye) - np.kron(eye, h.conj()))
    S = np.diag(block.source_weights.astype(complex))
    try:
        X = np.linalg.solve(K, S.reshape(-1)).reshape(d, d)
    except np.linalg.LinAlgError as err:
        raise ValueError(
            "singular excited-state superoperator (a non-decaying excited state)"
        ) from err
    diag = np.real(np.diagonal(X))
    return float(-np.dot(block.sink_weights, diag))


# ---------------------------------------------------------------------------
# Dense Lindblad integration of the full model (4-level pairs + photon).
# ---------------------------------------------------------------------------

_LEVELS = 4  # |G>=0, |D>=1, |A>=2, |F>=3


def _pair_op(N: int, n: int, ket: int, bra: int) -> np.ndarray:
    """|ket><bra| on pair n, identity elsewhere (photon factor excluded)."""
    op3 = np.zeros((_LEVELS, _LEVELS))
    op3[ket, bra] = 1.0
    out = np.array([[1.0]])
    for m in range(N):
        out = np.kron(out, op3 if m == n else np.eye(_LEVELS))
    return out


def _full_operators(params: ModelParams, N: int):
    """Hamiltonian and sqrt-rate Lindblad operators on photon (x) pairs.

    The photon mode is truncated at one photon; the pump operator maps the
    one-photon sector to zero, consistently with its use in the decay part
    of the non-Hermitian Hamiltonian.
    """
    dim_p = _LEVELS ** N
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    adag = a.T
    eye_ph = np.eye(2)
    eye_p = np.eye(dim_p)

    H = np.zeros((2 * dim_p, 2 * dim_p), dtype=complex)
    for n in range(N):
        H += params.delta * np.kron(eye_ph, _pair_op(N, n, 2, 2))
        H += params.V * np.kron(eye_ph, _pair_op(N, n, 1, 2) + _pair_op(N, n, 2, 1))
        H += params.g * (np.kron(a, _pair_op(N, n, 1, 0)) + np.kron(adag, _pair_op(N, n, 0, 1)))

    lindblads = [
        np.sqrt(params.kappa_plus / 2.0) * np.kron(adag, eye_p),
        np.sqrt(params.kappa / 2.0) * np.kron(a, eye_p),
    ]
    for n in range(N):
        lindblads.append(np.sqrt(params.gamma_plus / 2.0) * np.kron(eye_ph, _pair_op(N, n, 1, 0)))
        lindblads.append(np.sqrt(params.gamma / 2.0) * np.kron(eye_ph, _pair_op(N, n, 0, 1)))
        lindblads.append(np.sqrt(params.eta / 2.0) * np.kron(eye_ph, _pair_op(N, n, 3, 2)))
    return H, lindblads


def _population_ops(params: ModelParams, N: int):
    dim_p = _LEVELS ** N
    eye_ph = np.eye(2)
    n_ph = np.diag([0.0, 1.0])
    eye_p = np.eye(dim_p)
    NG = sum(np.kron(eye_ph, _pair_op(N, n, 0, 0)) for n in range(N))
    NF = sum(np.kron(eye_ph, _pair_op(N, n, 3, 3)) for n in range(N))
    Ne = np.kron(n_ph, eye_p)
    for n in range(N):
        Ne = Ne + np.kron(eye_ph, _pair_op(N, n, 1, 1) + _pair_op(N, n, 2, 2))
    return NG, NF, Ne


@dataclass(frozen=True)
class DenseLindbladResult:
    t_grid: np.ndarray
    n_g: np.ndarray
    n_f: np.ndarray
    n_e: np.ndarray
    trace_error: float       # max |tr(rho) - 1| over the grid
    hermiticity_error: float  # max elementwise |rho - rho^dagger|
    min_eigenvalue: float     # most negative density-matrix eigenvalue seen


def _ground_density(N: int) -> np.ndarray:
    dim = 2 * _LEVELS ** N
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1.0  # |0_ph, G...G> is index 0 in both factors
    return rho0


def dense_lindblad_integrate(params: ModelParams, N: int, t_grid) -> DenseLindbladResult:
    """Populations <N_G>, <N_F>, <N_e> of the full master equation on a grid."""
    validate(params)
    if not 1 <= N <= MAX_DENSE_N:
        raise ValueError(f"dense integration supports 1 <= N <= {MAX_DENSE_N}, got {N}")
    t_grid = np.asarray(t_grid, dtype=float)
    H, lindblads = _full_operators(params, N)
    NG, NF, Ne = _population_ops(params, N)
    rho0 = _ground_density(N)
    if N <= 2:
        rhos = _propagate_eig(H, lindblads, rho0, t_grid)
    else:
        rhos = _propagate_ivp(H, lindblads, rho0, t_grid)

    n_g = np.array([np.real(np.trace(NG @ r)) for r in rhos])
    n_f = np.array([np.real(np.trace(NF @ r)) for r in rhos])
    n_e = np.array([np.real(np.trace(Ne @ r)) for r in rhos])
    traces = np.array([np.trace(r) for r in rhos])
    herm = max(np.max(np.abs(r - r.conj().T)) for r in rhos)
    min_eig = min(np.min(np.linalg.eigvalsh(0.5 * (r + r.conj().T))) for r in rhos)
    return DenseLindbladResult(
        t_grid=t_grid,
        n_g=n_g,
        n_f=n_f,
        n_e=n_e,
        trace_error=float(np.max(np.abs(traces - 1.0))),
        hermiticity_error=float(herm),
        min_eigenvalue=float(min_eig),
    )


def _liouvillian(H: np.ndarray, lindblads) -> np.ndarray:
    dim = H.shape[0]
    eye = np.eye(dim)
    H_nh = H - 1j * sum(L.conj().T @ L for L in lindblads)
    Lsup = -1j * (np.kron(H_nh, eye) - np.kron(eye, H_nh.conj()))
    for L in lindblads:
        Lsup += 2.0 * np.kron(L, L.conj())
    return Lsup


def _hermitian_basis(dim: int):
    """Sparse unitary map from real coordinates to vec(rho).

    Columns are vectorized orthonormal Hermitian basis matrices: the first
    ``dim`` are the diagonal units, followed by symmetric and antisymmetric
    off-diagonal pairs.  Real coordinate vectors correspond exactly to
    Hermitian matrices, which is what makes the propagation below preserve
    hermiticity by construction.
    """
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    col = 0
    for j in range(dim):
        rows.append(j * dim + j)
        cols.append(col)
        vals.append(1.0)
        col += 1
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for j in range(dim):
        for k in range(j + 1, dim):
            rows += [j * dim + k, k * dim + j]
            cols += [col, col]
            vals += [inv_sqrt2, inv_sqrt2]
            col += 1
            rows += [j * dim + k, k * dim + j]
            cols += [col, col]
            vals += [1j * inv_sqrt2, -1j * inv_sqrt2]
            col += 1
    return sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)),
                         shape=(dim * dim, dim * dim))


def _propagate_eig(H, lindblads, rho0, t_grid):
    """Exact evolution of the generator in a structure-preserving frame.

    The Liouvillian is expressed over a real Hermitian operator basis (so
    every reconstructed state is Hermitian to machine precision), and the
    trace direction is rotated onto a single coordinate whose generator row
    vanishes identically for any Lindblad generator; zeroing the assembly
    roundoff in that row makes trace conservation exact.  The traceless
    block is then diagonalized once and evaluated analytically on the grid.
    """
    dim = H.shape[0]
    Lsup = _liouvillian(H, lindblads)
    W = _hermitian_basis(dim)
    Lr = np.real(W.getH() @ Lsup @ W.toarray())
    # Trace functional = sum of the first `dim` coordinates; its generator
    # row is structurally zero, so remove the assembly roundoff.
    Lr[:dim, :] -= Lr[:dim, :].sum(axis=0) / dim
    # Householder rotation taking ones/sqrt(dim) (the trace direction within
    # the diagonal coordinates) onto the first coordinate.
    u = np.full(dim, 1.0 / np.sqrt(dim))
    v = u - np.eye(dim)[0]
    Hh = np.eye(dim) - 2.0 * np.outer(v, v) / np.dot(v, v)
    G = Lr.copy()
    G[:dim, :] = Hh @ G[:dim, :]
    G[:, :dim] = G[:, :dim] @ Hh
    G[0, :] = 0.0
    col = G[1:, 0]
    Gtt = G[1:, 1:]

    x0 = np.real(W.getH() @ rho0.reshape(-1))
    x0[:dim] = Hh @ x0[:dim]
    a0 = x0[0]
    rest0 = x0[1:]
    # affine solution: y(t) = p + exp(Gtt t) (y0 - p) with p the pumped
    # stationary tail; Gtt is invertible whenever the stationary state is
    # unique, which holds for the pumped configurations this oracle serves
    p = np.linalg.solve(Gtt, -col * a0)
    w, V = np.linalg.eig(Gtt)
    w = np.where(w.real > 0.0, 1j * w.imag, w)  # generator spectra decay
    z = np.linalg.solve(V, rest0 - p)
    out = []
    with np.errstate(all="ignore"):
        for t in t_grid:
            factors = np.where(w.real * t < 500.0, np.exp(w * t), 0.0)
            rest = p + np.real(V @ (z * factors))
            x = np.concatenate(([a0], rest))
            x[:dim] = Hh @ x[:dim]
            out.append((W @ x).reshape(dim, dim))
    return out


def _propagate_ivp(H, lindblads, rho0, t_grid):
    """Adaptive RK integration with the right-hand side applied matrix-wise."""
    dim = H.shape[0]
    H_nh = H - 1j * sum(L.conj().T @ L for L in lindblads)

    def rhs(_, y):
        rho = y.reshape(dim, dim)
        drho = -1j * (H_nh @ rho - rho @ H_nh.conj().T)
        for L in lindblads:
            drho += 2.0 * (L @ rho @ L.conj().T)
        return drho.reshape(-1)

    sol = solve_ivp(rhs, (0.0, float(t_grid[-1])), rho0.reshape(-1).astype(complex),
                    t_eval=t_grid, method="RK45", rtol=1e-8, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"dense Lindblad integration failed: {sol.message}")
    return [sol.y[:, i].reshape(dim, dim) for i in range(sol.y.shape[1])]
