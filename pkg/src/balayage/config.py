"""Strict JSON run configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .geometry import DomainSpec, GeometryError
from .harmonic import MAX_DEGREE


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def _reject_unknown(data: dict, allowed: set[str], where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _number(value: Any, name: str, *, integer: bool = False) -> float | int:
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        raise ConfigError(f"{name} must be {'an integer' if integer else 'a number'}")
    return value


@dataclass(frozen=True)
class Tolerances:
    complementarity: float = 1e-8
    optimizer: float = 1e-10
    verification: float = 1e-3
    oracle_relative: float = 2e-2
    equality: float = 2e-3
    separation: float = 2e-2
    trace: float = 5e-3

    @classmethod
    def from_dict(cls, data: dict) -> "Tolerances":
        names = {f.name for f in fields(cls)}
        _reject_unknown(data, names, "tolerances")
        vals = {k: float(_number(v, f"tolerances.{k}")) for k, v in data.items()}
        out = cls(**vals)
        for k, v in asdict(out).items():
            if not v > 0:
                raise ConfigError(f"tolerances.{k} must be positive")
        return out


@dataclass(frozen=True)
class Atom:
    location: tuple[float, ...]
    mass: float


@dataclass(frozen=True)
class BalayageSetup:
    """Measures for the ``balayage`` command; the container is the run domain."""

    atoms: tuple[Atom, ...] = ()
    density: float = 0.0
    density_region: DomainSpec | None = None
    nu: float | None = None  # defaults to N

    @classmethod
    def from_dict(cls, data: dict) -> "BalayageSetup":
        _reject_unknown(data, {"atoms", "density", "density_region", "nu"}, "balayage")
        atoms = []
        for i, a in enumerate(data.get("atoms", [])):
            _reject_unknown(a, {"location", "mass"}, f"balayage.atoms[{i}]")
            if "location" not in a or "mass" not in a:
                raise ConfigError(f"balayage.atoms[{i}] needs location and mass")
            loc = tuple(float(_number(c, "atom coordinate")) for c in a["location"])
            mass = float(_number(a["mass"], "atom mass"))
            if mass <= 0:
                raise ConfigError("atom masses must be positive")
            atoms.append(Atom(loc, mass))
        region = data.get("density_region")
        nu = data.get("nu")
        return cls(
            atoms=tuple(atoms),
            density=float(_number(data.get("density", 0.0), "balayage.density")),
            density_region=None if region is None else DomainSpec.from_dict(region),
            nu=None if nu is None else float(_number(nu, "balayage.nu")),
        )

    def as_dict(self) -> dict:
        return {
            "atoms": [{"location": list(a.location), "mass": a.mass} for a in self.atoms],
            "density": self.density,
            "density_region": None if self.density_region is None else self.density_region.to_dict(),
            "nu": self.nu,
        }


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec | None = None
    resolution: int = 96
    degree: int = 8
    pole_degree: int | None = None
    boundary_samples: int | None = None
    n_transport: int = 2000
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output_dir: str | None = None
    balayage: BalayageSetup = field(default_factory=BalayageSetup)

    KEYS = ("domain", "resolution", "degree", "pole_degree", "boundary_samples", "n_transport",
            "tolerances", "seed", "output_dir", "balayage")

    def __post_init__(self) -> None:
        if self.resolution < 16:
            raise ConfigError("resolution must be at least 16")
        if not 2 <= self.degree <= MAX_DEGREE:
            raise ConfigError(f"degree must lie in [2, {MAX_DEGREE}]")
        if self.pole_degree is not None and not 0 <= self.pole_degree <= MAX_DEGREE:
            raise ConfigError(f"pole_degree must lie in [0, {MAX_DEGREE}]")
        if self.boundary_samples is not None and self.boundary_samples < 1:
            raise ConfigError("boundary_samples must be positive")
        if not 8 <= self.n_transport <= 5000:
            raise ConfigError("n_transport must lie in [8, 5000]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _reject_unknown(data, set(cls.KEYS), "config")
        kw: dict[str, Any] = {}
        try:
            if "domain" in data:
                kw["domain"] = DomainSpec.from_dict(data["domain"])
            for name in ("resolution", "degree", "n_transport", "seed"):
                if name in data:
                    kw[name] = int(_number(data[name], name, integer=True))
            for name in ("pole_degree", "boundary_samples"):
                if data.get(name) is not None:
                    kw[name] = int(_number(data[name], name, integer=True))
            if "tolerances" in data:
                kw["tolerances"] = Tolerances.from_dict(data["tolerances"])
            if data.get("output_dir") is not None:
                if not isinstance(data["output_dir"], str):
                    raise ConfigError("output_dir must be a string")
                kw["output_dir"] = data["output_dir"]
            if "balayage" in data:
                kw["balayage"] = BalayageSetup.from_dict(data["balayage"])
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    def with_overrides(self, *, seed: int | None = None, output_dir: str | None = None) -> "RunConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        if seed is not None:
            kw["seed"] = seed
        if output_dir is not None:
            kw["output_dir"] = output_dir
        return RunConfig(**kw)

    def as_dict(self) -> dict:
        return {
            "domain": None if self.domain is None else self.domain.to_dict(),
            "resolution": self.resolution,
            "degree": self.degree,
            "pole_degree": self.pole_degree,
            "boundary_samples": self.boundary_samples,
            "n_transport": self.n_transport,
            "tolerances": asdict(self.tolerances),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "balayage": self.balayage.as_dict(),
        }


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(data)
