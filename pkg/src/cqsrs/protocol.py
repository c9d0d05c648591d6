"""The secure remote sensing protocol: distribution, verification, encoding, estimation.

Roles: a source (Alice or external) prepares GHZ copies, Bob holds the sensing
qubits, Eve may tamper with the transmitted qubits. All randomness is drawn from
one generator seeded by the configuration, so a run is a pure function of its
config.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import SZ, QubitRegister, embed, partial_trace
from .dynamics import ControlPulse, LocalSensor, NoiseModel, default_segments
from .metrology import heisenberg_variance, sigma_x_product_povm
from .states import ChannelModel, ghz

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackModel:
    """``none``, ``intercept_resend_z`` (fraction of copies attacked) or ``bias`` (phase rate beta)."""

    kind: str = "none"
    fraction: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "intercept_resend_z", "bias"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("attacked fraction must lie in [0, 1]")
        if not math.isfinite(self.beta):
            raise ValueError("bias must be finite")


@dataclass(frozen=True)
class ProtocolConfig:
    n_alice: int = 1
    n_sensing: int = 2
    p: int = 10_020
    p_c: int = 20
    t_s: float = math.pi / 4
    omega: float = 1.0
    channel: ChannelModel = field(default_factory=ChannelModel)
    source: str = "alice"
    attack: AttackModel = field(default_factory=AttackModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        if self.n_alice < 1 or self.n_sensing < 1:
            raise ValueError("need at least one ancilla and one sensing qubit")
        if self.p_c < 0 or self.p_c % 2:
            raise ValueError("p_c must be a non-negative even number")
        if self.p_s < 1:
            raise ValueError("p - p_c must leave at least one sensing state")
        if not self.t_s > 0:
            raise ValueError("t_s must be positive")
        if self.source not in ("alice", "external"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.channel.kind == "adp" and self.source != "alice":
            raise ValueError("asymmetric depolarisation requires Alice as the source")
        if self.channel.kind == "dp" and self.source != "external":
            raise ValueError("symmetric depolarisation requires an external source")

    @property
    def n(self) -> int:
        return self.n_alice + self.n_sensing

    @property
    def p_s(self) -> int:
        return self.p - self.p_c

    @property
    def register(self) -> QubitRegister:
        return QubitRegister.split(self.n_alice, self.n_sensing)

    @property
    def window(self) -> tuple[float, float]:
        """Identifiable omega range of the arccos estimator."""
        return 0.0, math.pi / (self.n_sensing * self.t_s)


@dataclass
class SecurityReport:
    x_passed: int = 0
    x_failed: int = 0
    z_passed: int = 0
    z_failed: int = 0
    vacuous: bool = False
    checked: tuple[int, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.x_failed == 0 and self.z_failed == 0

    @property
    def verdict(self) -> str:
        return "accept" if self.accepted else "abort"

    def to_dict(self) -> dict:
        return {"x_passed": self.x_passed, "x_failed": self.x_failed,
                "z_passed": self.z_passed, "z_failed": self.z_failed,
                "vacuous": self.vacuous, "verdict": self.verdict}


@dataclass
class EstimationResult:
    omega_hat: float
    stderr: float
    n_plus: int
    n_minus: int
    qcrb: float
    boundary: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


# --- distribution -------------------------------------------------------------

def z_dephase(rho: np.ndarray, qubits) -> np.ndarray:
    """Computational-basis measure-and-resend on ``qubits`` (ensemble average)."""
    out = rho
    n = int(round(math.log2(rho.shape[0])))
    for q in qubits:
        z = embed(SZ, q, n)
        out = 0.5 * (out + z @ out @ z)
    return out


def bias_rotation(rho: np.ndarray, beta: float, t_s: float, qubits) -> np.ndarray:
    """Extra phase exp(-i beta t_s/2 sum sigma_z) on the transmitted qubits."""
    n = int(round(math.log2(rho.shape[0])))
    diag = np.zeros(2**n)
    for q in qubits:
        diag += np.real(np.diag(embed(SZ, q, n)))
    phase = np.exp(-0.5j * beta * t_s * diag)
    return phase[:, None] * rho * phase.conj()[None, :]


def distribute(config: ProtocolConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """``p`` shared copies after the channel and any attack on Bob's qubits.

    Identical copies share one array object.
    """
    bob = config.register.bob
    clean = config.channel.apply(ghz(config.n), sent=bob)
    attack = config.attack
    if attack.kind == "none":
        return [clean] * config.p
    if attack.kind == "bias":
        return [bias_rotation(clean, attack.beta, config.t_s, bob)] * config.p
    tampered = z_dephase(clean, bob)
    n_hit = int(round(attack.fraction * config.p))
    hit = set(rng.choice(config.p, size=n_hit, replace=False).tolist()) if n_hit else set()
    return [tampered if k in hit else clean for k in range(config.p)]


# --- sampling -----------------------------------------------------------------

def _sample_index(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf /= cdf[..., -1:]
    return np.minimum((cdf < u[..., None]).sum(axis=-1), probs.shape[-1] - 1)


def _bits_to_signs(index: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1)
    bits = (index[..., None] >> shifts) & 1
    return 1 - 2 * bits


def x_basis_probabilities(rho: np.ndarray) -> np.ndarray:
    """Joint product-sigma_x outcome probabilities (index bit 0 <-> eigenvalue +1)."""
    n = int(round(math.log2(rho.shape[-1])))
    return np.clip(sigma_x_product_povm(n).probabilities(rho), 0.0, None)


def z_basis_probabilities(rho: np.ndarray) -> np.ndarray:
    return np.clip(np.real(np.diagonal(rho, axis1=-2, axis2=-1)), 0.0, None)


def _probabilities_per_round(states: list[np.ndarray], basis) -> np.ndarray:
    cache: dict[int, np.ndarray] = {}
    rows = []
    for s in states:
        key = id(s)
        if key not in cache:
            cache[key] = basis(s)
        rows.append(cache[key])
    return np.array(rows)


def measure_rounds(states: list[np.ndarray], n_alice: int, rng: np.random.Generator):
    """Product-sigma_x outcomes for each state: Bob samples first, then Alice conditionally.

    Returns (bob, alice) arrays of +-1 with shapes (rounds, n_bob) and (rounds, n_alice).
    """
    if not states:
        return np.zeros((0, 0), int), np.zeros((0, n_alice), int)
    probs = _probabilities_per_round(states, x_basis_probabilities)
    n = int(round(math.log2(probs.shape[-1])))
    n_bob = n - n_alice
    joint = probs.reshape(len(states), 2**n_alice, 2**n_bob)
    bob_marginal = joint.sum(axis=1)
    u = rng.random((len(states), 2))
    b = _sample_index(bob_marginal, u[:, 0])
    alice_cond = joint[np.arange(len(states)), :, b]
    a = _sample_index(alice_cond, u[:, 1])
    return _bits_to_signs(b, n_bob), _bits_to_signs(a, n_alice)


def measure_round(state: np.ndarray, rng: np.random.Generator, n_alice: int = 1):
    """One round: (Bob's +-1 outcomes, Alice's +-1 outcomes)."""
    bob, alice = measure_rounds([state], n_alice, rng)
    return tuple(int(v) for v in bob[0]), tuple(int(v) for v in alice[0])


# --- protocol steps -------------------------------------------------------------

def security_check(states: list[np.ndarray], config: ProtocolConfig, rng: np.random.Generator) -> SecurityReport:
    """Random p_c copies; half face the sigma_x parity test, half the sigma_z equality test."""
    if config.p_c == 0:
        return SecurityReport(vacuous=True)
    chosen = rng.choice(len(states), size=config.p_c, replace=False)
    half = config.p_c // 2
    x_idx, z_idx = chosen[:half], chosen[half:]
    report = SecurityReport(checked=tuple(int(k) for k in chosen))

    xp = _probabilities_per_round([states[k] for k in x_idx], x_basis_probabilities)
    outcomes = _sample_index(xp, rng.random(half))
    # parity +1 <-> even number of -1 outcomes
    parity_even = np.array([bin(int(o)).count("1") % 2 == 0 for o in outcomes])
    report.x_passed = int(parity_even.sum())
    report.x_failed = half - report.x_passed

    zp = _probabilities_per_round([states[k] for k in z_idx], z_basis_probabilities)
    outcomes = _sample_index(zp, rng.random(half))
    all_equal = (outcomes == 0) | (outcomes == zp.shape[-1] - 1)
    report.z_passed = int(all_equal.sum())
    report.z_failed = half - report.z_passed
    return report


def encode(
    state: np.ndarray,
    omega: float,
    t_s: float,
    sensing=(1, 2),
    noise: NoiseModel | None = None,
    pulse: ControlPulse | None = None,
) -> np.ndarray:
    """Evolve under (omega/2) sum sigma_z on the sensing qubits for ``t_s``.

    Without noise or pulse this is the exact phase encoding; otherwise the
    noisy, optionally controlled, local dynamics are used.
    """
    sensing = tuple(sensing)
    if (noise is None or noise.kind == "none") and pulse is None:
        n = int(round(math.log2(state.shape[0])))
        diag = np.zeros(2**n)
        for q in sensing:
            diag += np.real(np.diag(embed(SZ, q, n)))
        phase = np.exp(-0.5j * omega * t_s * diag)
        return phase[:, None] * state * phase.conj()[None, :]
    if pulse is None:
        pulse = ControlPulse.zeros(t_s, default_segments(t_s), len(sensing))
    return LocalSensor(noise or NoiseModel(), sensing).evolve(state, omega, pulse)


def estimate(n_plus: int, p_s: int, n_sensing: int, t_s: float) -> EstimationResult:
    """Invert the mean parity cos(N_S omega t_s) with arccos; delta-method error."""
    if p_s < 1 or not 0 <= n_plus <= p_s:
        raise ValueError("parity counts must satisfy 0 <= n_plus <= p_s, p_s >= 1")
    scale = n_sensing * t_s
    mean = 2.0 * n_plus / p_s - 1.0
    boundary = abs(mean) >= 1.0
    omega_hat = math.acos(min(1.0, max(-1.0, mean))) / scale
    # var(mean) = (1 - mean^2)/p_s and |d arccos/dx| = 1/sqrt(1 - x^2) cancel
    stderr = 1.0 / (scale * math.sqrt(p_s))
    return EstimationResult(omega_hat, stderr, int(n_plus), int(p_s - n_plus),
                            math.sqrt(heisenberg_variance(p_s, n_sensing, t_s)), boundary)


@dataclass
class ProtocolRun:
    config: ProtocolConfig
    security: SecurityReport
    estimation: EstimationResult | None

    @property
    def aborted(self) -> bool:
        return self.estimation is None

    def transcript(self) -> dict:
        return {
            "security": self.security.to_dict(),
            "aborted": self.aborted,
            "estimation": None if self.estimation is None else self.estimation.to_dict(),
        }


def run_protocol(config: ProtocolConfig, pulse: ControlPulse | None = None) -> ProtocolRun:
    """distribute -> security_check -> (accept) encode + measure p_s copies -> estimate."""
    rng = np.random.default_rng(config.seed)
    lo, hi = config.window
    if not lo < config.omega < hi:
        log.warning("omega=%g lies outside the identifiable window (%g, %g)", config.omega, lo, hi)
    states = distribute(config, rng)
    report = security_check(states, config, rng)
    if not report.accepted:
        return ProtocolRun(config, report, None)
    checked = set(report.checked)
    sensing_states = [s for k, s in enumerate(states) if k not in checked]
    bob = config.register.bob
    encoded_cache: dict[int, np.ndarray] = {}
    encoded = []
    for s in sensing_states:
        key = id(s)
        if key not in encoded_cache:
            encoded_cache[key] = encode(s, config.omega, config.t_s, bob, config.noise, pulse)
        encoded.append(encoded_cache[key])
    bob_out, alice_out = measure_rounds(encoded, config.n_alice, rng)
    # Bob announces his parity; Alice folds it into her own outcome product
    parity = bob_out.prod(axis=1) * alice_out.prod(axis=1)
    n_plus = int((parity == 1).sum())
    return ProtocolRun(config, report, estimate(n_plus, config.p_s, config.n_sensing, config.t_s))


def bob_reduced_state(config: ProtocolConfig, omega: float) -> np.ndarray:
    """Bob's marginal of the ideal encoded state."""
    rho = encode(ghz(config.n), omega, config.t_s, config.register.bob)
    return partial_trace(rho, config.register.bob)
