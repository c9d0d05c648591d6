"""Hamiltonians, Lindbladians and piecewise-constant noisy propagation.

Two propagation routes exist. :func:`build_lindbladian` / :func:`propagate`
work on the full register (a ``4**n`` square superoperator) and serve as the
reference. :class:`LocalSensor` exploits that the encoding Hamiltonian, the
local controls and every noise model act qubit by qubit, so the evolution map
is a tensor product of single-qubit channels built from 4x4 generators. The
optimisers run on the second route.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import SX, SY, SZ, dag, embed, expm, hermitize, num_qubits

DEFAULT_DT = 0.1
DEFAULT_DOMEGA = None      # exact derivative; a float selects central differences
FD_DOMEGA = 1e-5
MIN_DOMEGA = 1e-7

# control channel order per sensing qubit: (x, y, z)
CONTROL_PAULIS = (SX, SY, SZ)


@dataclass(frozen=True)
class NoiseModel:
    """Markovian noise applied independently to every sensing qubit.

    kinds: ``none``; ``gpd`` (tilted dephasing axis set by ``theta``/``phi``);
    ``ppd`` (z dephasing); ``dp`` (x, y and z dephasing at equal rate).
    ``gpd_copies=3`` reads the GPD k-sum literally as three identical
    collapse operators per qubit.
    """

    kind: str = "none"
    rate: float = 0.0
    theta: float = np.pi / 4
    phi: float = 0.0
    gpd_copies: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "gpd", "ppd", "dp"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.rate < 0:
            raise ValueError("noise rate must be non-negative")
        if self.gpd_copies not in (1, 3):
            raise ValueError("gpd_copies must be 1 or 3")
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise ValueError("noise angles must be finite")

    def collapse_operators(self) -> list[tuple[float, np.ndarray]]:
        """Single-qubit ``(rate, L)`` pairs, applied to each sensing qubit."""
        if self.kind == "none" or self.rate == 0.0:
            return []
        if self.kind == "gpd":
            axis = (np.sin(self.theta) * np.cos(self.phi) * SX
                    + np.sin(self.theta) * np.sin(self.phi) * SY
                    + np.cos(self.theta) * SZ)
            return [(self.rate, axis)] * self.gpd_copies
        if self.kind == "ppd":
            return [(self.rate, SZ)]
        return [(self.rate, SX), (self.rate, SY), (self.rate, SZ)]


# reference rates
GPD = NoiseModel("gpd", 0.05, np.pi / 4, 0.0)
PPD = NoiseModel("ppd", 0.025)
DP = NoiseModel("dp", 0.02)


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i[h, rho] (row-major vectorisation)."""
    eye = np.eye(h.shape[-1])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_superop(rate: float, op: np.ndarray) -> np.ndarray:
    eye = np.eye(op.shape[-1])
    ldl = dag(op) @ op
    return rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))


def encoding_hamiltonian(omega: float, n: int, sensing: Iterable[int]) -> np.ndarray:
    """(omega/2) * sum of sigma_z over the sensing qubits."""
    sensing = list(sensing)
    if not sensing:
        raise ValueError("encoding needs at least one sensing qubit")
    h = np.zeros((2**n, 2**n), dtype=complex)
    for q in sensing:
        h += embed(SZ, q, n)
    return 0.5 * omega * h


def control_hamiltonian(amplitudes: Sequence[float], n: int, sensing: Sequence[int]) -> np.ndarray:
    """Local control term; ``amplitudes`` holds (x, y, z) per sensing qubit, in order."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.shape != (3 * len(sensing),):
        raise ValueError(f"expected {3 * len(sensing)} control amplitudes, got {amplitudes.shape}")
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i, q in enumerate(sensing):
        for c, p in enumerate(CONTROL_PAULIS):
            h += amplitudes[3 * i + c] * embed(p, q, n)
    return h


def build_lindbladian(
    h: np.ndarray,
    noise: NoiseModel,
    targets: Iterable[int],
    controls: np.ndarray | None = None,
) -> np.ndarray:
    """Full-register generator of -i[H + Hc, rho] + sum_k g_k D[L_k] rho.

    Noise collapse operators are embedded on every qubit in ``targets``.
    """
    n = num_qubits(h)
    if controls is not None:
        if controls.shape != h.shape:
            raise ValueError(f"control Hamiltonian shape {controls.shape} != {h.shape}")
        h = h + controls
    gen = commutator_superop(h)
    for q in targets:
        for rate, op in noise.collapse_operators():
            gen = gen + dissipator_superop(rate, embed(op, q, n))
    return gen


def propagate(rho0: np.ndarray, segments: Sequence[tuple[np.ndarray, float]]) -> np.ndarray:
    """Apply exp(dt_m L_m) ... exp(dt_1 L_1) to ``rho0``."""
    for _, dt in segments:
        if not dt > 0:
            raise ValueError(f"segment duration must be positive, got {dt}")
    d = rho0.shape[-1]
    vec = rho0.reshape(-1).astype(complex)
    for gen, dt in segments:
        if gen.shape != (d * d, d * d):
            raise ValueError(f"generator shape {gen.shape} does not match state dimension {d}")
        vec = expm(dt * gen) @ vec
    return hermitize(vec.reshape(d, d))


# --- factorised single-qubit route ------------------------------------------

def apply_qubit_channels(rho: np.ndarray, channels: Sequence[np.ndarray], qubits: Sequence[int]) -> np.ndarray:
    """Apply single-qubit transfer matrices (row-major 4x4, optionally batched) to ``rho``.

    Leading batch axes of ``rho`` and of the channels broadcast against each other.
    """
    n = num_qubits(rho)
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows, cols = list(letters[:n]), list(letters[n:2 * n])
    out = rho
    for s, q in zip(channels, qubits):
        s4 = s.reshape(s.shape[:-2] + (2, 2, 2, 2))
        t = out.reshape(out.shape[:-2] + (2,) * (2 * n))
        new_r, new_c = "Y", "Z"
        src = "".join(rows) + "".join(cols)
        dst_rows = rows.copy()
        dst_cols = cols.copy()
        dst_rows[q], dst_cols[q] = new_r, new_c
        dst = "".join(dst_rows) + "".join(dst_cols)
        spec = f"...{new_r}{new_c}{rows[q]}{cols[q]},...{src}->...{dst}"
        t = np.einsum(spec, s4, t)
        out = t.reshape(t.shape[:-2 * n] + (2**n, 2**n))
    return out


@dataclass
class ControlPulse:
    """Piecewise-constant amplitudes, shape (3 * n_sensing, segments), over ``duration``."""

    amplitudes: np.ndarray
    duration: float

    def __post_init__(self):
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        if self.amplitudes.shape[1] < 1:
            raise ValueError("pulse needs at least one segment")
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")

    @classmethod
    def zeros(cls, duration: float, segments: int, n_sensing: int = 2) -> "ControlPulse":
        return cls(np.zeros((3 * n_sensing, segments)), duration)

    @property
    def segments(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def segment_duration(self) -> float:
        return self.duration / self.segments

    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.amplitudes)))


def default_segments(duration: float, dt: float = DEFAULT_DT) -> int:
    return max(1, int(round(duration / dt)))


@dataclass
class LocalSensor:
    """Per-qubit generators for the encoding + control + noise evolution of the sensing qubits."""

    noise: NoiseModel = field(default_factory=NoiseModel)
    sensing: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        self.sensing = tuple(self.sensing)
        if not self.sensing:
            raise ValueError("encoding needs at least one sensing qubit")
        gen = np.zeros((4, 4), dtype=complex)
        for rate, op in self.noise.collapse_operators():
            gen = gen + dissipator_superop(rate, op)
        self.noise_generator = gen
        # d/d omega of the single-qubit generator
        self.encoding_generator = commutator_superop(0.5 * SZ)
        self.control_generators = np.stack([commutator_superop(p) for p in CONTROL_PAULIS])

    def generators(self, omega: float, amplitudes: np.ndarray) -> np.ndarray:
        """Single-qubit generators, shape (..., n_sensing, segments, 4, 4).

        ``amplitudes`` has shape (..., 3 * n_sensing, segments).
        """
        amps = np.asarray(amplitudes, dtype=float)
        ns = len(self.sensing)
        amps = amps.reshape(amps.shape[:-2] + (ns, 3, amps.shape[-1]))
        ctrl = np.einsum("...qcm,cij->...qmij", amps, self.control_generators)
        return self.noise_generator + omega * self.encoding_generator + ctrl

    def channels(self, omega: float, pulse: ControlPulse) -> np.ndarray:
        """Transfer matrix of each sensing qubit over the pulse, shape (n_sensing, 4, 4)."""
        props = expm(pulse.segment_duration * self.generators(omega, pulse.amplitudes))
        return chain(props)

    def evolve(self, rho0: np.ndarray, omega: float, pulse: ControlPulse) -> np.ndarray:
        return hermitize(apply_qubit_channels(rho0, list(self.channels(omega, pulse)), self.sensing))

    def block_generators(self, omega: float, amplitudes: np.ndarray) -> np.ndarray:
        """[[G, dG/domega], [0, G]] per qubit and segment, shape (..., n_sensing, segments, 8, 8).

        Its exponential holds the propagator on the diagonal blocks and the exact
        omega-derivative of the propagator in the upper-right block; products of
        such matrices keep that structure, so chaining segments stays exact.
        """
        g = self.generators(omega, amplitudes)
        out = np.zeros(g.shape[:-2] + (8, 8), dtype=complex)
        out[..., :4, :4] = g
        out[..., 4:, 4:] = g
        out[..., :4, 4:] = self.encoding_generator
        return out

    def evolve_with_derivative(
        self, rho0: np.ndarray, omega: float, pulse: ControlPulse, domega: float | None = DEFAULT_DOMEGA
    ) -> tuple[np.ndarray, np.ndarray]:
        """State and d rho/d omega; exact unless a finite-difference step ``domega`` is given."""
        if domega is None:
            blocks = chain(expm(pulse.segment_duration * self.block_generators(omega, pulse.amplitudes)))
            return derivative_states(rho0, blocks, self.sensing)
        check_domega(domega)
        omegas = np.array([omega, omega + domega, omega - domega])
        gens = np.stack([self.generators(w, pulse.amplitudes) for w in omegas])
        chans = chain(expm(pulse.segment_duration * gens))
        rhos = hermitize(apply_qubit_channels(rho0, list(np.moveaxis(chans, 1, 0)), self.sensing))
        return rhos[0], (rhos[1] - rhos[2]) / (2 * domega)


def derivative_states(rho0: np.ndarray, blocks: np.ndarray, sensing: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """(rho, drho) from per-qubit block channels of shape (..., n_sensing, 8, 8).

    drho is the product rule: one term per sensing qubit with its channel
    replaced by the derivative block.
    """
    ns = blocks.shape[-3]
    p, dp = blocks[..., :4, :4], blocks[..., :4, 4:]
    variants = np.repeat(p[..., None, :, :, :], ns + 1, axis=-4)      # (..., ns+1, ns, 4, 4)
    for q in range(ns):
        variants[..., q + 1, q, :, :] = dp[..., q, :, :]
    rhos = apply_qubit_channels(rho0, [variants[..., q, :, :] for q in range(ns)], sensing)
    return hermitize(rhos[..., 0, :, :]), hermitize(rhos[..., 1:, :, :].sum(axis=-3))


def chain(props: np.ndarray) -> np.ndarray:
    """Ordered product P_m ... P_1 over the segment axis (-3)."""
    out = props[..., 0, :, :]
    for k in range(1, props.shape[-3]):
        out = props[..., k, :, :] @ out
    return out


def check_domega(domega: float | None) -> None:
    if domega is not None and not domega >= MIN_DOMEGA:
        raise ValueError(f"derivative step {domega} below the cancellation guard {MIN_DOMEGA}")


def propagate_with_derivative(
    rho0: np.ndarray,
    omega: float,
    noise: NoiseModel,
    pulse: ControlPulse | None,
    duration: float,
    dt: float = DEFAULT_DT,
    domega: float | None = DEFAULT_DOMEGA,
    sensing: Sequence[int] = (1, 2),
) -> tuple[np.ndarray, np.ndarray]:
    """State at ``duration`` and its omega-derivative (exact, or central differences with ``domega``).

    Without a pulse the evolution uses ``duration / dt`` zero-control segments.
    """
    if pulse is None:
        pulse = ControlPulse.zeros(duration, default_segments(duration, dt), len(sensing))
    elif not np.isclose(pulse.duration, duration):
        raise ValueError(f"pulse duration {pulse.duration} != evolution time {duration}")
    return LocalSensor(noise, tuple(sensing)).evolve_with_derivative(rho0, omega, pulse, domega)
