"""
Strict TOML experiment configuration.

Every table is checked for unknown keys and wrong types; errors name the
dotted path of the offending field (``model.m``, ``grid.n_points``).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .errors import ConfigError, ModelError, UnknownTag
from .hilbert import Grid
from .model import LindbladModel, Potential, QBMParams, from_qbm, standard

__all__ = [
    "PotentialConfig",
    "ModelConfig",
    "GridConfig",
    "IntegrationConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

_REQUIRED = object()
_NUMBER = (int, float)

_POTENTIAL_KEYS: Dict[str, Tuple[str, ...]] = {
    "free": (),
    "harmonic": ("omega",),
    "inverted_harmonic": ("omega",),
    "quartic": ("lam",),
    "double_well": ("v0", "separation"),
    "tabulated": ("nodes", "values"),
}
_MODEL_KEYS = {
    "standard": ("kind", "a", "b", "m", "hbar", "theta", "potential"),
    "qbm": ("kind", "gamma", "kT", "m", "hbar", "potential"),
}


def _check_keys(table: Mapping[str, Any], allowed, path: str) -> None:
    for key in table:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", field_path=where)


def _take(table: Mapping[str, Any], key: str, types, path: str, default: Any = _REQUIRED) -> Any:
    where = f"{path}.{key}" if path else key
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError("missing required key", field_path=where)
        return default
    value = table[key]
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"expected {_type_name(types)}, got a boolean", field_path=where)
    if not isinstance(value, types):
        raise ConfigError(f"expected {_type_name(types)}, got {type(value).__name__}", field_path=where)
    return float(value) if types == _NUMBER else value


def _type_name(types) -> str:
    if types == _NUMBER:
        return "a number"
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


def _table(data: Mapping[str, Any], key: str, path: str = "", required: bool = True) -> Dict[str, Any]:
    where = f"{path}.{key}" if path else key
    if key not in data:
        if required:
            raise ConfigError("missing required table", field_path=where)
        return {}
    value = data[key]
    if not isinstance(value, dict):
        raise ConfigError(f"expected a table, got {type(value).__name__}", field_path=where)
    return value


def _positive(value: float, where: str) -> float:
    if not value > 0:
        raise ConfigError(f"must be positive; got {value}", field_path=where)
    return value


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = "free"
    params: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, table: Mapping[str, Any], path: str) -> "PotentialConfig":
        kind = _take(table, "kind", str, path, "free")
        if kind not in _POTENTIAL_KEYS:
            raise ConfigError(
                f"unknown potential {kind!r}; known: {', '.join(sorted(_POTENTIAL_KEYS))}",
                field_path=f"{path}.kind",
            )
        allowed = _POTENTIAL_KEYS[kind]
        _check_keys(table, ("kind", *allowed), path)
        params: Dict[str, Any] = {}
        for key in allowed:
            if key not in table:
                continue
            if kind == "tabulated":
                values = _take(table, key, list, path)
                if not all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in values):
                    raise ConfigError("expected a list of numbers", field_path=f"{path}.{key}")
                params[key] = tuple(float(v) for v in values)
            else:
                params[key] = _take(table, key, _NUMBER, path)
        return cls(kind, params)

    def build(self, mass: float) -> Potential:
        params = dict(self.params)
        if self.kind in ("harmonic", "inverted_harmonic"):
            params["mass"] = mass
        return Potential.from_tag(self.kind, **params)


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    a: float = 0.0
    b: float = 0.0
    m: float = 1.0
    hbar: float = 1.0
    theta: float = 0.0
    gamma: float = 0.0
    kT: float = 0.0
    potential: PotentialConfig = field(default_factory=PotentialConfig)

    @classmethod
    def parse(cls, table: Mapping[str, Any]) -> "ModelConfig":
        path = "model"
        kind = _take(table, "kind", str, path, "standard")
        if kind not in _MODEL_KEYS:
            raise ConfigError(f"unknown model kind {kind!r}; use standard or qbm", field_path="model.kind")
        _check_keys(table, _MODEL_KEYS[kind], path)
        m = _positive(_take(table, "m", _NUMBER, path, 1.0), "model.m")
        hbar = _positive(_take(table, "hbar", _NUMBER, path, 1.0), "model.hbar")
        potential = PotentialConfig.parse(_table(table, "potential", path, required=False), f"{path}.potential")
        if kind == "standard":
            return cls(
                kind=kind,
                a=_take(table, "a", _NUMBER, path),
                b=_take(table, "b", _NUMBER, path, 0.0),
                m=m,
                hbar=hbar,
                theta=_take(table, "theta", _NUMBER, path, 0.0),
                potential=potential,
            )
        return cls(
            kind=kind,
            m=m,
            hbar=hbar,
            gamma=_positive(_take(table, "gamma", _NUMBER, path), "model.gamma"),
            kT=_positive(_take(table, "kT", _NUMBER, path), "model.kT"),
            potential=potential,
        )

    def build(self) -> LindbladModel:
        try:
            potential = self.potential.build(self.m)
            if self.kind == "qbm":
                return from_qbm(QBMParams(self.gamma, self.kT, self.m, self.hbar), potential)
            return standard(self.a, self.b, self.m, self.hbar, potential, theta=self.theta)
        except (ModelError, UnknownTag) as exc:
            raise ConfigError(str(exc), field_path="model") from exc


@dataclass(frozen=True)
class GridConfig:
    n_points: int = 128
    x_min: float = -20.0
    x_max: float = 20.0

    @classmethod
    def parse(cls, table: Mapping[str, Any]) -> "GridConfig":
        _check_keys(table, ("n_points", "x_min", "x_max"), "grid")
        return cls(
            n_points=_take(table, "n_points", int, "grid", 128),
            x_min=_take(table, "x_min", _NUMBER, "grid", -20.0),
            x_max=_take(table, "x_max", _NUMBER, "grid", 20.0),
        )

    def build(self, hbar: float) -> Grid:
        try:
            return Grid(self.n_points, self.x_min, self.x_max, hbar)
        except ValueError as exc:
            raise ConfigError(str(exc), field_path="grid") from exc


@dataclass(frozen=True)
class IntegrationConfig:
    t: float = 10.0
    dt: Optional[float] = None
    n_traj: int = 200
    base_seed: int = 0
    record_every: int = 10

    @classmethod
    def parse(cls, table: Mapping[str, Any]) -> "IntegrationConfig":
        path = "integration"
        _check_keys(table, ("t", "dt", "n_traj", "base_seed", "record_every"), path)
        dt = _take(table, "dt", _NUMBER, path, None)
        out = cls(
            t=_take(table, "t", _NUMBER, path, 10.0),
            dt=None if dt is None else _positive(dt, "integration.dt"),
            n_traj=_take(table, "n_traj", int, path, 200),
            base_seed=_take(table, "base_seed", int, path, 0),
            record_every=_take(table, "record_every", int, path, 10),
        )
        if out.t < 0:
            raise ConfigError(f"must be nonnegative; got {out.t}", field_path="integration.t")
        if out.n_traj < 1:
            raise ConfigError(f"must be >= 1; got {out.n_traj}", field_path="integration.n_traj")
        if out.record_every < 1:
            raise ConfigError(f"must be >= 1; got {out.record_every}", field_path="integration.record_every")
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelConfig
    grid: GridConfig
    integration: IntegrationConfig
    options: Mapping[str, Any]
    output_dir: Path
    threads: int = 1
    raw: Mapping[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def build_model(self) -> LindbladModel:
        return self.model.build()

    def build_grid(self) -> Grid:
        return self.grid.build(self.model.hbar)

    def with_overrides(
        self,
        *,
        output_dir: Optional[Path | str] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> "ExperimentConfig":
        out = self
        if output_dir is not None:
            out = replace(out, output_dir=Path(output_dir))
        if seed is not None:
            out = replace(out, integration=replace(out.integration, base_seed=int(seed)))
        if threads is not None:
            if threads < 1:
                raise ConfigError(f"must be >= 1; got {threads}", field_path="threads")
            out = replace(out, threads=int(threads))
        return out


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    from .experiments import EXPERIMENTS  # registry imports this module

    _check_keys(data, ("experiment", "model", "grid", "integration", "experiment_options", "output"), "")
    name = _take(data, "experiment", str, "")
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r}; known: {', '.join(sorted(EXPERIMENTS))}", field_path="experiment"
        )
    model = ModelConfig.parse(_table(data, "model"))
    grid = GridConfig.parse(_table(data, "grid", required=False))
    integration = IntegrationConfig.parse(_table(data, "integration", required=False))
    options = EXPERIMENTS[name].resolve_options(_table(data, "experiment_options", required=False))
    output = _table(data, "output", required=False)
    _check_keys(output, ("directory",), "output")
    directory = Path(_take(output, "directory", str, "output", f"qsdlab-out/{name}"))
    return ExperimentConfig(name, model, grid, integration, options, directory, raw=dict(data))


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(data)
