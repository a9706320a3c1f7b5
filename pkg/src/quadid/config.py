"""Pipeline configuration: schema, defaults and YAML/JSON round-tripping.

The shipped default profile is the desk-scale stock vehicle: the
closed-loop plant built from DEFAULT_XI with the hover-balanced mass
xi13 / g (the constant vertical force offset must cancel weight for the
vehicle to hold altitude inside the command bounds).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import InertiaParams
from .errors import ConfigError
from .pd_model import DEFAULT_GRAVITY, DEFAULT_XI, PdModel, PdParams
from .simulate import ChirpSpec, ClosedFormPdPlant, ExcitationConfig, InnerLoopPlant
from .sindy import LibrarySpec, SolverConfig
from .mpc import OcpConfig

# Hover-balanced mass for the stock parameter set.
STOCK_MASS = float(DEFAULT_XI[12] / DEFAULT_GRAVITY)


def _build(cls, data: dict, section: str):
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad keys in config section '{section}': {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad values in config section '{section}': {exc}") from None


@dataclass
class PlantConfig:
    kind: str = "closed_form"
    mass: float = STOCK_MASS
    g: float = DEFAULT_GRAVITY
    xi: list = field(default_factory=lambda: [float(v) for v in DEFAULT_XI])
    substeps: int = 10

    def __post_init__(self):
        if self.kind not in ("closed_form", "inner_loop"):
            raise ValueError(f"unknown plant kind {self.kind!r}")
        if len(self.xi) != 16:
            raise ValueError("plant xi must have 16 entries")

    def params(self) -> PdParams:
        return PdParams(np.asarray(self.xi, dtype=float))

    def pd_model(self) -> PdModel:
        return PdModel(self.params(), self.mass, self.g)

    def build(self, dt: float):
        if self.kind == "closed_form":
            return ClosedFormPdPlant(self.pd_model(), dt, self.substeps)
        params = self.params()
        inertia = InertiaParams(
            mass=self.mass, ix=params.ix, iy=params.iy, iz=params.iz, g=self.g
        )
        return InnerLoopPlant(params, inertia, dt, self.substeps)


@dataclass
class ExcitationSection:
    duration: float = 120.0
    dt: float = 0.005
    chirps: list = field(
        default_factory=lambda: [
            {"amp": 1.5, "f0": 0.05, "f1": 1.5, "phase": 0.0},
            {"amp": 0.35, "f0": 0.05, "f1": 1.2, "phase": 1.3},
            {"amp": 0.35, "f0": 0.07, "f1": 1.2, "phase": 2.1},
            {"amp": 0.8, "f0": 0.05, "f1": 0.8, "phase": 0.7},
        ]
    )
    z_vel_gain: float = 2.0
    z_pos_gain: float = 0.2
    xy_pos_gain: float = 0.02
    xy_vel_gain: float = 0.08
    yaw_gain: float = 0.3
    hold_position: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def build(self, g: float) -> ExcitationConfig:
        return ExcitationConfig(
            chirps=[_build(ChirpSpec, dict(c), "excitation.chirps") for c in self.chirps],
            z_vel_gain=self.z_vel_gain,
            z_pos_gain=self.z_pos_gain,
            xy_pos_gain=self.xy_pos_gain,
            xy_vel_gain=self.xy_vel_gain,
            yaw_gain=self.yaw_gain,
            hold_position=np.asarray(self.hold_position, dtype=float),
            g=g,
        )


@dataclass
class PreprocessConfig:
    method: str = "savgol"
    lowpass_lambda: float = 1.0
    savgol_window: int = 11
    savgol_poly: int = 3

    def __post_init__(self):
        if self.method not in ("none", "lowpass", "savgol"):
            raise ValueError(f"unknown preprocessing method {self.method!r}")


@dataclass
class SindySection:
    library: dict = field(default_factory=lambda: LibrarySpec().to_dict())
    solver: dict = field(
        default_factory=lambda: SolverConfig(normalize_columns=True).to_dict()
    )

    def library_spec(self) -> LibrarySpec:
        return LibrarySpec.from_dict(self.library)

    def solver_config(self) -> SolverConfig:
        return _build(SolverConfig, dict(self.solver), "sindy.solver")


@dataclass
class IdentPdSection:
    bounds_lo: list = field(default_factory=lambda: [-2.0] * 13 + [1e-6] * 3)
    bounds_hi: list = field(default_factory=lambda: [2.0] * 13 + [0.1] * 3)
    init: list | None = None
    freeze: list | None = None
    max_iter: int = 50

    def bounds(self) -> np.ndarray:
        return np.column_stack(
            [np.asarray(self.bounds_lo, float), np.asarray(self.bounds_hi, float)]
        )


@dataclass
class NoiseConfig:
    sigma_states: float = 0.0


@dataclass
class ExperimentConfig:
    trajectory: str = "circular"
    duration: float = 60.0
    x_init: list = field(default_factory=lambda: [3.0, 3.0, 5.0, 0.0, 0.0, 0.0])

    def initial_state(self) -> np.ndarray:
        x = np.zeros(12)
        x[0:6] = np.asarray(self.x_init, dtype=float)
        return x


@dataclass
class PipelineConfig:
    seed: int = 0
    plant: PlantConfig = field(default_factory=PlantConfig)
    excitation: ExcitationSection = field(default_factory=ExcitationSection)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    preprocess_pd: PreprocessConfig = field(
        default_factory=lambda: PreprocessConfig(method="lowpass")
    )
    preprocess_sindy: PreprocessConfig = field(
        default_factory=lambda: PreprocessConfig(method="savgol")
    )
    sindy: SindySection = field(default_factory=SindySection)
    ident_pd: IdentPdSection = field(default_factory=IdentPdSection)
    mpc: dict = field(default_factory=lambda: _ocp_defaults())
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def ocp_config(self) -> OcpConfig:
        return _build(OcpConfig, dict(self.mpc), "mpc")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "PipelineConfig":
        data = dict(data)
        sections = {
            "plant": PlantConfig,
            "excitation": ExcitationSection,
            "noise": NoiseConfig,
            "preprocess_pd": PreprocessConfig,
            "preprocess_sindy": PreprocessConfig,
            "ident_pd": IdentPdSection,
            "sindy": SindySection,
            "experiment": ExperimentConfig,
        }
        kwargs = {}
        for key, value in data.items():
            if key in sections:
                kwargs[key] = _build(sections[key], dict(value), key)
            elif key in ("seed", "mpc"):
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config section {key!r}")
        return PipelineConfig(**kwargs)

    def save(self, path) -> None:
        path = Path(path)
        text = yaml.safe_dump(_plain(self.to_dict()), sort_keys=False)
        path.write_text(text, encoding="utf-8")

    @staticmethod
    def load(path) -> "PipelineConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            if path.suffix == ".json":
                data = json.loads(text)
            else:
                data = yaml.safe_load(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} does not hold a mapping")
        return PipelineConfig.from_dict(data)


def _ocp_defaults() -> dict:
    cfg = OcpConfig()
    return {
        "n_horizon": cfg.n_horizon,
        "dt": cfg.dt,
        "q_diag": [float(v) for v in cfg.q_diag],
        "r_diag": [float(v) for v in cfg.r_diag],
        "max_sqp_iter": cfg.max_sqp_iter,
        "rti": cfg.rti,
        "substeps": cfg.substeps,
        "velocity_refs": cfg.velocity_refs,
        "psi_ref": cfg.psi_ref,
    }


def _plain(obj):
    """Recursively convert numpy scalars/arrays for clean YAML output."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
