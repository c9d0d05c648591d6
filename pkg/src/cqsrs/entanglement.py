"""Negativity-based entanglement measures and entanglement-death detection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import hermitize, num_qubits, partial_transpose

DEATH_THRESHOLD = 1e-6
# eigenvalues of the partial transpose above -EIGEN_TOL count as zero; the cube
# root in the tripartite mean would otherwise turn 1e-17 round-off into 1e-6
EIGEN_TOL = 1e-13
TRIPARTITE_CUTS = ((0,), (2,), (1,))  # A|B1B2, AB1|B2, AB2|B1 (transposed side listed)


def negativity(rho: np.ndarray, part: Iterable[int]) -> float:
    """(||rho^{T_part}||_1 - 1) / 2, i.e. the summed magnitude of negative PT eigenvalues."""
    ev = np.linalg.eigvalsh(hermitize(partial_transpose(rho, part)))
    return float(-ev[ev < -EIGEN_TOL].sum())


def tripartite_negativity(rho: np.ndarray) -> float:
    """Geometric mean (cube root) of the three single-qubit-cut negativities."""
    if num_qubits(rho) != 3:
        raise ValueError("tripartite negativity needs a 3-qubit state")
    factors = [negativity(rho, cut) for cut in TRIPARTITE_CUTS]
    if min(factors) <= 0.0:
        return 0.0
    return float(np.prod(factors) ** (1.0 / 3.0))


@dataclass
class NegativityTrajectory:
    times: np.ndarray
    values: np.ndarray
    tag: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(self.values < 0):
            raise ValueError("negativity values must be non-negative")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def death_time(traj: NegativityTrajectory, threshold: float = DEATH_THRESHOLD) -> float | None:
    """Time at which the trajectory first falls below ``threshold``, or None.

    The crossing is linearly interpolated between the bracketing grid points.
    """
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    below = np.flatnonzero(traj.values < threshold)
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return float(traj.times[0])
    t0, t1 = traj.times[k - 1], traj.times[k]
    v0, v1 = traj.values[k - 1], traj.values[k]
    return float(t0 + (v0 - threshold) / (v0 - v1) * (t1 - t0))
