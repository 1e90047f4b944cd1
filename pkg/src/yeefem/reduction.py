"""
Algebraic reduction to one degree of freedom on selected edges.

``P`` prolongs reduced coefficients (duplicating the single coefficient of
a reduced edge onto both of its slots), ``R = (P^T P)^{-1} P^T`` averages
the two coefficients of a reduced edge, and ``Q = P R`` is the averaging
projector onto the reduced space expressed in full-space coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import BlockDiagMatrix
from .exceptions import ContractError
from .femcore import DofMap


@dataclass(frozen=True, eq=False)
class ReductionOperators:
    P: sp.csr_matrix  # (n_full, n_reduced)
    R: sp.csr_matrix  # (n_reduced, n_full)
    Q: sp.csr_matrix  # (n_full, n_full)


def build_projection_matrices(d: DofMap) -> ReductionOperators:
    n_full, n_red = d.n_full, d.n_reduced
    s = d.reduced_start
    second = np.where(d.reduced, s, s + 1)
    cols = np.stack([s, second], axis=1).ravel()
    P = sp.csr_matrix((np.ones(n_full), (np.arange(n_full), cols)),
                      shape=(n_full, n_red))
    PtP = (P.T @ P).diagonal()
    R = sp.csr_matrix(sp.diags(1.0 / PtP) @ P.T)
    Q = sp.csr_matrix(P @ R)
    for A in (P, R, Q):
        A.sort_indices()
    return ReductionOperators(P=P, R=R, Q=Q)


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    Minv: sp.csr_matrix
    Msigma: sp.csr_matrix
    K: sp.csr_matrix
    rhs_mode: str = "lifted"


def _as_csr(A):
    if isinstance(A, BlockDiagMatrix):
        return A.tocsr()
    return sp.csr_matrix(A)


def reduce_system(Minv, Msigma, K, ops: ReductionOperators, rhs_mode="lifted"):
    """Reduced inverse mass ``R Minv R^T``, ``P^T Msigma P`` and ``P^T K P``."""
    if rhs_mode not in ("lifted", "direct"):
        raise ContractError(f"unknown rhs mode {rhs_mode!r}")
    n = ops.P.shape[0]
    Minv, Msigma, K = _as_csr(Minv), _as_csr(Msigma), _as_csr(K)
    for name, A in (("Minv", Minv), ("Msigma", Msigma), ("K", K)):
        if A.shape != (n, n):
            raise ContractError(f"{name} has shape {A.shape}, expected {(n, n)}")
    P, R = ops.P, ops.R
    out = []
    for A in (R @ Minv @ R.T, P.T @ Msigma @ P, P.T @ K @ P):
        A = sp.csr_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        out.append(A)
    return ReducedSystem(*out, rhs_mode=rhs_mode)


def reduce_rhs_lifted(load, Minv, ops: ReductionOperators):
    """``R Minv (f + g)`` from a full-space load vector."""
    load = np.asarray(load, dtype=float)
    if load.shape[-1] != ops.P.shape[0]:
        raise ContractError("load must live in the full space")
    return ops.R @ (Minv @ load)


def reduce_rhs_direct(load_reduced, Mtilde_inv):
    """``Mtilde^{-1} (f~ + g~)`` from a load assembled on the reduced space."""
    load_reduced = np.asarray(load_reduced, dtype=float)
    if load_reduced.shape[-1] != Mtilde_inv.shape[0]:
        raise ContractError("load must live in the reduced space")
    return Mtilde_inv @ load_reduced


def reduced_load(load, ops: ReductionOperators):
    """Load on the reduced basis ``Phi_ij + Phi_ji``, i.e. ``P^T`` times the full load."""
    return ops.P.T @ np.asarray(load, dtype=float)
