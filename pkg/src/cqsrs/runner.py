"""Scenario configuration, the noise-scenario matrix, sweeps and deterministic output.

Config files are JSON objects. Unknown keys are rejected; every omitted key is
filled from the defaults below and echoed into the output metadata.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .control import DESettings, GrapeSettings, Scenario, de_optimize, grape_optimize
from .dynamics import DEFAULT_DOMEGA, ControlPulse, LocalSensor, NoiseModel
from .entanglement import NegativityTrajectory, death_time, tripartite_negativity
from .metrology import FisherRecord
from .protocol import AttackModel, ProtocolConfig
from .states import ChannelModel, ghz


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


NOISE_RATES = {"gpd": 0.05, "ppd": 0.025, "dp": 0.02}
DP_FINAL_TIME = 8.0
DEFAULT_CHANNEL_STRENGTH = 0.06

OPTIMIZER_DEFAULTS = {
    "method": "auto",
    "grape_segments_per_unit": 10,
    "de_segments_per_unit": 1,
    "max_amplitude": 5.0,
    "step": 0.1,
    "iterations": 30,
    "grad_step": 1e-4,
    "population": 30,
    "generations": 200,
    "mutation": 0.8,
    "crossover": 0.9,
}

SCENARIO_DEFAULTS: dict[str, Any] = {
    "evolution_noise": "gpd",
    "gamma": None,              # per-noise reference rate
    "theta": math.pi / 4,
    "phi": 0.0,
    "gpd_copies": 1,
    "channel": "ideal",
    "gamma_channel": None,      # 0.06 for dp/adp, 0 for ideal
    "source": None,             # alice for ideal/adp, external for dp
    "omega": 1.0,
    "t_grid": None,             # default 1..T_f
    "t_max": 10.0,              # cap on T_f when entanglement survives longer
    "T": None,                  # single point for `optimize`
    "domega": DEFAULT_DOMEGA,   # null: exact derivative; number: central-difference step
    "seed": 0,
    "optimizer": OPTIMIZER_DEFAULTS,
}

PROTOCOL_DEFAULTS: dict[str, Any] = {
    "n_alice": 1,
    "n_sensing": 2,
    "p": 10_020,
    "p_c": 20,
    "t_s": None,                # default puts N_S omega t_s = pi/2
    "omega": 1.0,
    "channel": "ideal",
    "gamma_channel": None,
    "source": None,
    "attack": {"kind": "none", "fraction": 1.0, "beta": 0.0},
    "evolution_noise": "none",
    "gamma": None,
    "theta": math.pi / 4,
    "phi": 0.0,
    "gpd_copies": 1,
    "seed": 0,
}


@dataclass
class ScenarioSpec:
    noise: NoiseModel
    channel: ChannelModel
    source: str
    omega: float
    t_grid: tuple[float, ...]
    domega: float | None
    seed: int
    optimizer: dict
    T: float | None = None
    resolved: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        ev = self.noise.kind.upper()
        return ev if self.channel.kind == "ideal" else f"{self.channel.kind.upper()}+{ev}"

    def initial_state(self) -> np.ndarray:
        return self.channel.apply(ghz(3), sent=(1, 2))

    def scenario(self, duration: float) -> Scenario:
        return Scenario(self.initial_state(), self.noise, float(duration), self.omega, (1, 2), self.domega)

    def method(self) -> str:
        m = self.optimizer["method"]
        if m == "auto":
            return "de" if self.noise.kind == "dp" else "grape"
        return m


# --- config loading -------------------------------------------------------------

def _read_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return doc


def _merge(doc: dict, defaults: dict, where: str = "") -> dict:
    unknown = sorted(set(doc) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config key(s) {', '.join(where + k for k in unknown)}")
    out = {}
    for key, default in defaults.items():
        if isinstance(default, dict):
            sub = doc.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"{where}{key}: expected an object")
            out[key] = _merge(sub, default, f"{where}{key}.")
        else:
            out[key] = doc.get(key, default)
    return out


def _channel(cfg: dict) -> tuple[ChannelModel, str]:
    kind = cfg["channel"]
    if kind not in ("ideal", "dp", "adp"):
        raise ConfigError(f"channel: unknown kind {kind!r}")
    strength = cfg["gamma_channel"]
    if strength is None:
        strength = 0.0 if kind == "ideal" else DEFAULT_CHANNEL_STRENGTH
    source = cfg["source"] or ("external" if kind == "dp" else "alice")
    if source not in ("alice", "external"):
        raise ConfigError(f"source: unknown value {source!r}")
    if kind == "adp" and source != "alice":
        raise ConfigError("source: channel 'adp' requires source 'alice'")
    if kind == "dp" and source != "external":
        raise ConfigError("source: channel 'dp' requires source 'external'")
    try:
        channel = ChannelModel(kind, float(strength))
    except ValueError as exc:
        raise ConfigError(f"gamma_channel: {exc}") from None
    cfg["gamma_channel"], cfg["source"] = float(strength), source
    return channel, source


def _noise(cfg: dict, allow_none: bool) -> NoiseModel:
    kind = cfg["evolution_noise"]
    allowed = ("none", "gpd", "ppd", "dp") if allow_none else ("gpd", "ppd", "dp")
    if kind not in allowed:
        raise ConfigError(f"evolution_noise: expected one of {allowed}, got {kind!r}")
    rate = cfg["gamma"]
    if rate is None:
        rate = NOISE_RATES.get(kind, 0.0)
    cfg["gamma"] = float(rate)
    try:
        return NoiseModel(kind, float(rate), float(cfg["theta"]), float(cfg["phi"]), int(cfg["gpd_copies"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"evolution_noise: {exc}") from None


def final_time(noise: NoiseModel, channel: ChannelModel, t_max: float) -> float:
    """Largest integer sweep time before the uncontrolled entanglement dies, capped."""
    if noise.kind == "dp":
        return DP_FINAL_TIME
    traj = negativity_trajectory(channel.apply(ghz(3), sent=(1, 2)), noise, np.arange(0.0, t_max + 0.25, 0.5))
    dt = death_time(traj)
    if dt is None:
        return float(math.floor(t_max))
    return float(min(math.floor(t_max), math.ceil(dt) - 1))


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    cfg = _merge(doc, SCENARIO_DEFAULTS)
    noise = _noise(cfg, allow_none=False)
    channel, source = _channel(cfg)
    opt = cfg["optimizer"]
    if opt["method"] not in ("auto", "grape", "de"):
        raise ConfigError(f"optimizer.method: unknown value {opt['method']!r}")
    if int(opt["population"]) < 4:
        raise ConfigError("optimizer.population: must be >= 4")
    if float(opt["max_amplitude"]) <= 0:
        raise ConfigError("optimizer.max_amplitude: must be positive")
    if cfg["t_grid"] is None:
        tf = final_time(noise, channel, float(cfg["t_max"]))
        cfg["t_grid"] = [float(t) for t in range(1, int(tf) + 1)]
    grid = tuple(float(t) for t in cfg["t_grid"])
    if not grid or any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("t_grid: must be a non-empty increasing list of positive times")
    if cfg["domega"] is not None and float(cfg["domega"]) < 1e-7:
        raise ConfigError("domega: must be null (exact derivative) or >= 1e-7")
    if cfg["T"] is not None and float(cfg["T"]) <= 0:
        raise ConfigError("T: must be positive")
    return ScenarioSpec(noise, channel, source, float(cfg["omega"]), grid,
                        None if cfg["domega"] is None else float(cfg["domega"]),
                        int(cfg["seed"]), opt, None if cfg["T"] is None else float(cfg["T"]), cfg)


def protocol_from_dict(doc: dict) -> ProtocolConfig:
    cfg = _merge(doc, PROTOCOL_DEFAULTS)
    noise = _noise(cfg, allow_none=True)
    channel, source = _channel(cfg)
    if cfg["t_s"] is None:
        cfg["t_s"] = math.pi / (2 * int(cfg["n_sensing"]) * float(cfg["omega"]))
    a = cfg["attack"]
    try:
        attack = AttackModel(a["kind"], float(a["fraction"]), float(a["beta"]))
        config = ProtocolConfig(int(cfg["n_alice"]), int(cfg["n_sensing"]), int(cfg["p"]), int(cfg["p_c"]),
                                float(cfg["t_s"]), float(cfg["omega"]), channel, source, attack, noise,
                                int(cfg["seed"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if channel.kind == "adp" and config.n != 3:
        raise ConfigError("channel: 'adp' is defined for 3-qubit registers only")
    return config


def load_config(path: str | Path, kind: str = "scenario"):
    """Parse and validate a JSON config into a ScenarioSpec or ProtocolConfig."""
    doc = _read_json(path)
    if kind == "protocol":
        return protocol_from_dict(doc)
    return scenario_from_dict(doc)


def protocol_metadata(config: ProtocolConfig) -> dict:
    """Fully resolved protocol configuration."""
    return {"command": "protocol", "version": __version__, "config": asdict(config)}


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    spec.seed = int(seed)
    spec.resolved["seed"] = int(seed)
    return spec


# --- sweeps ----------------------------------------------------------------------

def negativity_trajectory(rho0: np.ndarray, noise: NoiseModel, times, omega: float = 1.0, tag: str = "") -> NegativityTrajectory:
    """Uncontrolled tripartite negativity along ``times`` (t = 0 allowed)."""
    sensor = LocalSensor(noise, (1, 2))
    vals = []
    for t in times:
        rho = rho0 if t == 0 else sensor.evolve(rho0, omega, ControlPulse.zeros(float(t), 1))
        vals.append(tripartite_negativity(rho))
    return NegativityTrajectory(np.asarray(times, dtype=float), vals, tag)


def optimize_point(spec: ScenarioSpec, duration: float, measure: str):
    """Optimise one (T, objective) point with the scenario's optimiser."""
    sc = spec.scenario(duration)
    o = spec.optimizer
    if spec.method() == "grape":
        m = max(1, int(round(o["grape_segments_per_unit"] * duration)))
        settings = GrapeSettings(m, float(o["max_amplitude"]), float(o["step"]), int(o["iterations"]),
                                 float(o["grad_step"]), seed=spec.seed)
        return grape_optimize(sc, measure, settings)
    m = max(1, int(round(o["de_segments_per_unit"] * duration)))
    settings = DESettings(m, float(o["max_amplitude"]), int(o["population"]), int(o["generations"]),
                          float(o["mutation"]), float(o["crossover"]), _point_seed(spec.seed, duration, measure))
    return de_optimize(sc, measure, settings)


def _point_seed(seed: int, duration: float, measure: str) -> int:
    # independent, reproducible stream per sweep point
    ss = np.random.SeedSequence([seed, int(round(duration * 1000)), 0 if measure == "qfi" else 1])
    return int(ss.generate_state(1)[0])


def _fisher_row(args) -> FisherRecord:
    spec, t = args
    rq = optimize_point(spec, t, "qfi")
    rc = optimize_point(spec, t, "cfi")
    return FisherRecord(t, rq.baseline, rq.best_value, rc.baseline, rc.best_value)


def _negativity_row(args) -> tuple[float, float, float]:
    spec, t, measure = args
    report = optimize_point(spec, t, measure)
    sc = spec.scenario(t)
    rho_uc, _ = sc.states(np.zeros_like(report.best_pulse.amplitudes))
    rho_c, _ = sc.states(report.best_pulse.amplitudes)
    return t, tripartite_negativity(rho_uc), tripartite_negativity(rho_c)


def _map(func, items, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


@dataclass
class SweepOutput:
    columns: tuple[str, ...]
    rows: list[tuple[float, ...]]
    metadata: dict


def sweep_fisher(spec: ScenarioSpec, workers: int = 1) -> SweepOutput:
    records = _map(_fisher_row, [(spec, t) for t in spec.t_grid], workers)
    rows = [(r.T, r.uc_qfi, r.c_qfi, r.uc_cfi, r.c_cfi) for r in records]
    return SweepOutput(("T", "uc_qfi", "c_qfi", "uc_cfi", "c_cfi"), rows, _metadata(spec, "sweep-fisher"))


def sweep_negativity(spec: ScenarioSpec, measure: str = "qfi", workers: int = 1) -> SweepOutput:
    rows = _map(_negativity_row, [(spec, t, measure) for t in spec.t_grid], workers)
    return SweepOutput(("T", "neg_uncontrolled", "neg_controlled"), rows, _metadata(spec, "sweep-negativity"))


def _metadata(spec: ScenarioSpec, command: str) -> dict:
    return {"command": command, "scenario": spec.tag, "method": spec.method(),
            "version": __version__, "config": spec.resolved}


# --- output ------------------------------------------------------------------------

def format_number(x: float) -> str:
    return format(float(x), ".12g")


def csv_text(output: SweepOutput) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(output.columns)
    for row in output.rows:
        w.writerow([format_number(v) for v in row])
    return buf.getvalue()


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def metadata_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def emit(output: SweepOutput, path: str | Path) -> None:
    """Write the CSV and a ``<path>.meta.json`` sidecar; byte-stable for equal inputs."""
    p = Path(path)
    p.write_text(csv_text(output))
    metadata_path(p).write_text(dump_json(output.metadata))
