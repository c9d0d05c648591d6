"""Fisher information, the symmetric logarithmic derivative and Cramer-Rao bounds.

``sld``, ``qfi`` and ``cfi`` accept stacks of states (leading batch axes) so the
optimisers can score many candidate pulses in one call.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import dag, kron

EIGEN_CUTOFF = 1e-10
PROB_CUTOFF = 1e-12


@dataclass(frozen=True)
class Povm:
    elements: np.ndarray          # (K, d, d)
    labels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.labels) != len(self.elements):
            raise ValueError("one label per POVM element")

    def check(self, tol: float = 1e-10) -> None:
        d = self.elements.shape[-1]
        if np.max(np.abs(self.elements.sum(axis=0) - np.eye(d))) > tol:
            raise ValueError("POVM elements do not sum to identity")
        for m in self.elements:
            if np.max(np.abs(m - dag(m))) > tol or np.linalg.eigvalsh(m).min() < -tol:
                raise ValueError("POVM element is not positive semidefinite")

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("kij,...ji->...k", self.elements, rho).real


@dataclass(frozen=True)
class FisherRecord:
    T: float
    uc_qfi: float
    c_qfi: float
    uc_cfi: float
    c_cfi: float


def sld(rho: np.ndarray, drho: np.ndarray, cutoff: float = EIGEN_CUTOFF) -> np.ndarray:
    """Symmetric logarithmic derivative from the eigenbasis of ``rho``.

    Pairs with lambda_i + lambda_j below ``cutoff`` are dropped.
    """
    lam, vecs = np.linalg.eigh(rho)
    d_eig = dag(vecs) @ drho @ vecs
    denom = lam[..., :, None] + lam[..., None, :]
    keep = denom > cutoff
    coeff = np.where(keep, 2.0 / np.where(keep, denom, 1.0), 0.0)
    return vecs @ (coeff * d_eig) @ dag(vecs)


def qfi(rho: np.ndarray, drho: np.ndarray, cutoff: float = EIGEN_CUTOFF) -> np.ndarray | float:
    """Quantum Fisher information Tr[rho L^2]."""
    lsld = sld(rho, drho, cutoff)
    out = ((rho @ lsld) * np.swapaxes(lsld, -1, -2)).sum(axis=(-1, -2)).real
    return float(out) if np.ndim(out) == 0 else out


def cfi(rho: np.ndarray, drho: np.ndarray, povm: Povm, cutoff: float = PROB_CUTOFF):
    """Classical Fisher information of the outcome distribution of ``povm``."""
    p = povm.probabilities(rho)
    dp = povm.probabilities(drho)
    keep = p > cutoff
    out = np.where(keep, dp**2 / np.where(keep, p, 1.0), 0.0).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sigma_x_product_povm(n: int) -> Povm:
    """Projectors onto product sigma_x eigenstates, labelled by eigenvalue tuples."""
    if n < 1:
        raise ValueError("POVM needs at least one qubit")
    ket = {+1: np.array([1, 1]) / np.sqrt(2), -1: np.array([1, -1]) / np.sqrt(2)}
    labels = tuple(itertools.product((+1, -1), repeat=n))
    elems = []
    for lab in labels:
        v = kron(*[ket[s] for s in lab]).astype(complex)
        elems.append(np.outer(v, v.conj()))
    return Povm(np.array(elems), labels)


def cramer_rao(fisher: float, repetitions: int = 1) -> float:
    """1/sqrt(nu F); ``math.inf`` flags an unbounded estimate when F == 0."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if fisher < 0:
        raise ValueError("Fisher information must be non-negative")
    if fisher == 0:
        return math.inf
    return 1.0 / math.sqrt(repetitions * fisher)


qcrb = cramer_rao


def heisenberg_variance(p_s: int, n_sensing: int, t_s: float) -> float:
    """Variance bound 1/(p_s N_S^2 t_s^2) of the ideal GHZ protocol."""
    return 1.0 / (p_s * n_sensing**2 * t_s**2)
