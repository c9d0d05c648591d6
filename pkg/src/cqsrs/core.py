"""Dense linear algebra for few-qubit registers.

Conventions used throughout the package:

* qubit 0 is the most significant bit, so ``|q0 q1 q2>`` maps to index
  ``4*q0 + 2*q1 + q2``;
* registers list Alice's qubits first, then Bob's;
* superoperators act on row-major vectorised matrices, i.e.
  ``vec(A @ X @ B) == kron(A, B.T) @ vec(X)`` with ``vec = X.reshape(-1)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_FLOOR = -1e-9


@dataclass(frozen=True)
class QubitRegister:
    """Ordered qubit register; each label is ``"A"`` (Alice) or ``"B"`` (Bob)."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("register needs at least one qubit")
        bad = [l for l in self.labels if l not in ("A", "B")]
        if bad:
            raise ValueError(f"unknown qubit owner labels: {bad}")

    @classmethod
    def split(cls, n_alice: int, n_bob: int) -> "QubitRegister":
        if n_alice < 0 or n_bob < 0:
            raise ValueError("qubit counts must be non-negative")
        return cls(("A",) * n_alice + ("B",) * n_bob)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def alice(self) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.labels) if l == "A")

    @property
    def bob(self) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.labels) if l == "B")


def num_qubits(m: np.ndarray) -> int:
    d = m.shape[-1]
    n = int(round(np.log2(d)))
    if 2**n != d or m.shape[-2] != d:
        raise ValueError(f"matrix shape {m.shape} is not 2^n x 2^n")
    return n


def dag(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(m, -1, -2).conj()


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of operators, left to right."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, ops)


def embed(op: np.ndarray, target: int, n: int) -> np.ndarray:
    """Place a single-qubit operator on qubit ``target`` of an ``n``-qubit register."""
    if not 0 <= target < n:
        raise IndexError(f"target qubit {target} outside register of {n}")
    return kron(*[op if k == target else I2 for k in range(n)])


def _normalise_subset(qubits: Iterable[int], n: int) -> tuple[int, ...]:
    sub = tuple(sorted(set(int(q) for q in qubits)))
    for q in sub:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} outside register of {n}")
    return sub


def partial_trace(rho: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Reduced state on the qubits in ``keep`` (output keeps their original order)."""
    n = num_qubits(rho)
    keep = _normalise_subset(keep, n)
    if not keep:
        raise ValueError("keep set must be non-empty")
    drop = [q for q in range(n) if q not in keep]
    t = rho.reshape((2,) * (2 * n))
    # trace out from the highest index down so remaining axis numbers stay valid
    m = n
    for q in sorted(drop, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + m)
        m -= 1
    dk = 2 ** len(keep)
    return t.reshape(dk, dk)


def partial_transpose(rho: np.ndarray, part: Iterable[int]) -> np.ndarray:
    """Transpose the qubits in ``part`` (must be a proper non-empty subset)."""
    n = num_qubits(rho)
    part = _normalise_subset(part, n)
    if not part or len(part) == n:
        raise ValueError("partial transpose needs a proper non-empty subset")
    axes = list(range(2 * n))
    for q in part:
        axes[q], axes[q + n] = axes[q + n], axes[q]
    d = 2**n
    return rho.reshape((2,) * (2 * n)).transpose(axes).reshape(d, d)


def permute_qubits(rho: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Reorder qubits: qubit ``j`` of the result is qubit ``order[j]`` of ``rho``."""
    n = num_qubits(rho)
    order = list(order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"{order} is not a permutation of {n} qubits")
    d = 2**n
    return rho.reshape((2,) * (2 * n)).transpose(order + [n + k for k in order]).reshape(d, d)


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("trace norm needs a square matrix")
    if not m.size:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False).sum())


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * trace_norm(a - b)


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dag(m))


def state_violations(
    rho: np.ndarray,
    hermitian_tol: float = HERMITIAN_TOL,
    trace_tol: float = TRACE_TOL,
    eigen_floor: float = EIGEN_FLOOR,
) -> list[str]:
    """Human-readable list of density-matrix invariant violations (empty if valid)."""
    problems = []
    herm = float(np.max(np.abs(rho - dag(rho)))) if rho.size else 0.0
    if herm > hermitian_tol:
        problems.append(f"hermiticity defect {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        problems.append(f"trace {tr.real:.15f}{tr.imag:+.3e}j")
    lmin = float(np.linalg.eigvalsh(hermitize(rho)).min())
    if lmin < eigen_floor:
        problems.append(f"minimum eigenvalue {lmin:.3e}")
    return problems


def sanitize_state(rho: np.ndarray, **tols) -> np.ndarray:
    """Report invariant violations, then return the re-hermitised state."""
    problems = state_violations(rho, **tols)
    if problems:
        log.warning("density matrix invariant violated: %s", "; ".join(problems))
    return hermitize(rho)


# --- matrix exponential -----------------------------------------------------
# Scaling and squaring with diagonal Pade approximants (Higham 2005), batched
# over leading axes. Degree and scaling are chosen from the 1-norm.

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}


def _pade_uv(a: np.ndarray, deg: int, eye: np.ndarray):
    b = _PADE[deg]
    a2 = a @ a
    if deg == 13:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye)
        return u, v
    powers = [eye, a2]
    for _ in range(2, deg // 2 + 1):
        powers.append(powers[-1] @ a2)
    u = a @ sum(b[2 * k + 1] * p for k, p in enumerate(powers))
    v = sum(b[2 * k] * p for k, p in enumerate(powers))
    return u, v


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square matrix or a stack of them."""
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("expm input has non-finite entries")
    a = a.astype(complex if np.iscomplexobj(a) else float, copy=False)
    eye = np.eye(a.shape[-1], dtype=a.dtype)
    norms = np.abs(a).sum(axis=-2).max(axis=-1)
    nmax = float(np.max(norms)) if norms.size else 0.0
    for deg in (3, 5, 7, 9):
        if nmax <= _THETA[deg]:
            u, v = _pade_uv(a, deg, eye)
            return np.linalg.solve(v - u, v + u)
    # per-matrix scaling exponents
    s = np.maximum(0, np.ceil(np.log2(np.maximum(norms, 1e-300) / _THETA[13]))).astype(int)
    scaled = a / (2.0 ** s)[..., None, None]
    u, v = _pade_uv(scaled, 13, eye)
    r = np.linalg.solve(v - u, v + u)
    if r.ndim == 2:
        for _ in range(int(s)):
            r = r @ r
        return r
    for k in range(int(s.max())):
        sel = s > k
        r[sel] = r[sel] @ r[sel]
    return r
