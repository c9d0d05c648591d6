"""GHZ probe states and the transmission channels applied before sensing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import I2, num_qubits, partial_trace


def ghz_vector(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("GHZ state needs at least one qubit")
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def ghz(n: int) -> np.ndarray:
    """Density matrix of (|0...0> + |1...1>)/sqrt(2)."""
    if n < 1:
        raise ValueError("GHZ state needs at least one qubit")
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = rho[0, -1] = rho[-1, 0] = rho[-1, -1] = 0.5  # exact entries
    return rho


def maximally_mixed(n: int) -> np.ndarray:
    d = 2**n
    return np.eye(d, dtype=complex) / d


def depolarize_symmetric(rho: np.ndarray, lam: float) -> np.ndarray:
    """Global depolarisation (1 - lam) rho + lam I/d; turns a GHZ state into a Werner-type state."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing probability must lie in [0, 1], got {lam}")
    d = rho.shape[-1]
    return (1 - lam) * rho + lam * np.eye(d) / d


def _depolarize_qubit(rho: np.ndarray, q: int, gamma: float) -> np.ndarray:
    # Pauli-twirl identity: sum_k K_k rho K_k^dag = (1 - gamma) rho + gamma * (I/2 on q) x Tr_q rho
    n = num_qubits(rho)
    rest = [k for k in range(n) if k != q]
    if rest:
        reduced = partial_trace(rho, rest)
        traced = np.kron(reduced, I2 / 2)
        # kron put q last; move it back into position
        t = traced.reshape((2,) * (2 * n))
        order = rest + [q]
        inv = [order.index(k) for k in range(n)]
        t = t.transpose(inv + [n + i for i in inv])
        traced = t.reshape(rho.shape)
    else:
        traced = np.trace(rho) * I2 / 2
    return (1 - gamma) * rho + gamma * traced


def depolarize_asymmetric(rho: np.ndarray, gamma: float, noisy: Iterable[int] = (1, 2)) -> np.ndarray:
    """Independent single-qubit depolarisation of strength ``gamma`` on the ``noisy`` qubits.

    Kraus form per qubit: sqrt(1 - 3g/4) I, sqrt(g/4) X, sqrt(g/4) Y, sqrt(g/4) Z.
    The default targets Bob's two transmitted qubits of a 3-qubit register; Alice's
    qubit 0 is left untouched.
    """
    if num_qubits(rho) != 3:
        raise ValueError("asymmetric channel is defined on a 3-qubit register")
    if not 0.0 <= gamma <= 4.0 / 3.0:
        raise ValueError(f"depolarisation strength must lie in [0, 4/3], got {gamma}")
    out = rho
    for q in noisy:
        out = _depolarize_qubit(out, q, gamma)
    return out


@dataclass(frozen=True)
class ChannelModel:
    """Transmission channel: ``ideal``, ``dp`` (global depolarising, strength = lambda)
    or ``adp`` (asymmetric Kraus depolarising on the sent qubits, strength = Gamma)."""

    kind: str = "ideal"
    strength: float = 0.0

    def __post_init__(self):
        if self.kind == "ideal":
            if self.strength != 0.0:
                raise ValueError("ideal channel takes no parameter")
        elif self.kind == "dp":
            if not 0.0 <= self.strength <= 1.0:
                raise ValueError(f"dp mixing probability must lie in [0, 1], got {self.strength}")
        elif self.kind == "adp":
            if not 0.0 <= self.strength <= 4.0 / 3.0:
                raise ValueError(f"adp strength must lie in [0, 4/3], got {self.strength}")
        else:
            raise ValueError(f"unknown channel kind {self.kind!r}")

    def apply(self, rho: np.ndarray, sent: Iterable[int] = (1, 2)) -> np.ndarray:
        if self.kind == "dp":
            return depolarize_symmetric(rho, self.strength)
        if self.kind == "adp":
            return depolarize_asymmetric(rho, self.strength, noisy=sent)
        return rho.copy()
