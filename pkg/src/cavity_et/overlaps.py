"""Overlap coefficients between pump/decay basis states and the eigenstates.

The transfer-rate formula needs two coefficient families per eigenstate phi:
``c``-type overlaps (inverse bra applied to a basis state, e.g. the photon
or a localized donor |D_n>) and ``cbar``-type overlaps (ordinary bra of the
basis state applied to the right eigenvector).

Because the homogeneous model conserves quasi-momentum, the position-space
coefficients for pair n carry only a Fourier phase and never need to be
materialized: every sum over n in the rate reduces to the k = 0 component
(bright states) or to a single k-independent factor (dark states).  This is
what keeps the per-M cost of the rate constant and a full table over
M = 1..N linear in N.

Conventions (unitary discrete Fourier transform over the M active pairs):

* bright states: c_ph = first row entries of inv_rows; the k = 0 donor and
  acceptor components are the second and third rows of inv_rows divided by
  sqrt(M); cbar components are the eigenvector amplitudes, with donor and
  acceptor rows again carrying 1/sqrt(M).
* dark states: the k != 0 components are the rows of the 2x2 inv_rows
  divided by sqrt(M); cbar components are the (alpha, beta) amplitudes
  divided by sqrt(M).  With these definitions the dark-channel sum carries
  the combinatorial weight M^2 (M - 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectra import BrightEigensystem, DarkEigensystem


@dataclass(frozen=True)
class OverlapTable:
    """Quasi-momentum-reduced overlap coefficients at M ground pairs.

    Bright entries are length-3 arrays ordered [+, X, -]; dark entries are
    length-2 arrays ordered [k+, k-] and are None when M < 2 (no dark states
    exist for a single pair).
    """

    M: int
    c_ph: np.ndarray
    ctilde_D0: np.ndarray
    ctilde_A0: np.ndarray
    cbar_ph: np.ndarray
    cbartilde_D0: np.ndarray
    cbartilde_A0: np.ndarray
    ctilde_Dk: Optional[np.ndarray]
    ctilde_Ak: Optional[np.ndarray]
    cbartilde_Dk: Optional[np.ndarray]
    cbartilde_Ak: Optional[np.ndarray]


def bright_overlaps(sys: BrightEigensystem):
    """Overlap families for the three bright states.

    Returns (c_ph, ctilde_D0, ctilde_A0, cbar_ph, cbartilde_D0, cbartilde_A0).
    """
    root_m = np.sqrt(sys.M)
    c_ph = sys.inv_rows[:, 0].copy()
    ctilde_D0 = sys.inv_rows[:, 1] / root_m
    ctilde_A0 = sys.inv_rows[:, 2] / root_m
    cbar_ph = sys.vecs[0, :].copy()
    cbartilde_D0 = sys.vecs[1, :] / root_m
    cbartilde_A0 = sys.vecs[2, :] / root_m
    return c_ph, ctilde_D0, ctilde_A0, cbar_ph, cbartilde_D0, cbartilde_A0


def dark_overlaps(sys: DarkEigensystem, M: int):
    """Overlap families for one dark quasi-momentum family (k-independent).

    Returns (ctilde_Dk, ctilde_Ak, cbartilde_Dk, cbartilde_Ak).  Requires
    M >= 2: the dark manifold holds 2(M-1) states and is empty at M = 1.
    """
    if M < 2:
        raise ValueError(f"dark states exist only for M >= 2, got M={M}")
    root_m = np.sqrt(M)
    ctilde_Dk = sys.inv_rows[:, 0] / root_m
    ctilde_Ak = sys.inv_rows[:, 1] / root_m
    cbartilde_Dk = sys.vecs[0, :] / root_m
    cbartilde_Ak = sys.vecs[1, :] / root_m
    return ctilde_Dk, ctilde_Ak, cbartilde_Dk, cbartilde_Ak


def overlap_table(bright: BrightEigensystem, dark: Optional[DarkEigensystem]) -> OverlapTable:
    """Assemble the full table; ``dark`` may be None only when M == 1."""
    c_ph, tD0, tA0, cbar_ph, bD0, bA0 = bright_overlaps(bright)
    if bright.M >= 2:
        if dark is None:
            raise ValueError("dark eigensystem required for M >= 2")
        tDk, tAk, bDk, bAk = dark_overlaps(dark, bright.M)
    else:
        tDk = tAk = bDk = bAk = None
    return OverlapTable(
        M=bright.M,
        c_ph=c_ph,
        ctilde_D0=tD0,
        ctilde_A0=tA0,
        cbar_ph=cbar_ph,
        cbartilde_D0=bD0,
        cbartilde_A0=bA0,
        ctilde_Dk=tDk,
        ctilde_Ak=tAk,
        cbartilde_Dk=bDk,
        cbartilde_Ak=bAk,
    )
