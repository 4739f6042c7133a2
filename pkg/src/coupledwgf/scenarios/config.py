"""Typed scenario configuration loaded from TOML with strict key checking."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..energy import ApplicationExtras, EnergySpec, Mode
from ..errors import ConfigError
from ..families import make_family
from ..measures import ParticleEnsemble, sample_gaussian

DYNAMICS = ("coupled", "fast_x", "fast_rho", "fixed_x", "mean_shift_baseline")
SOLVERS = ("fv", "particles")
REFERENCES = ("none", "gibbs", "coupled_gibbs", "fast_x_fixed_point", "fast_rho_fixed_point")


def _strict(table: Any, allowed, where: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    for k in table:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}: unknown key; allowed keys are {sorted(allowed)}")
    return table


def _build(cls, table: Any, where: str, required=()):
    allowed = {f.name for f in fields(cls)}
    table = _strict(table, allowed, where)
    for k in required:
        if k not in table:
            raise ConfigError(f"{where}.{k}: missing required key")
    try:
        return cls(**table)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _vec(v, where):
    try:
        return tuple(float(x) for x in np.atleast_1d(v))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected a number or list of numbers") from exc


@dataclass(frozen=True)
class MeasureInit:
    #: "gaussian", "uniform" (fv only) or "dirac"
    kind: str = "gaussian"
    mean: Optional[Tuple[float, ...]] = None
    #: per-coordinate variance
    var: Optional[Tuple[float, ...]] = None
    point: Optional[Tuple[float, ...]] = None
    #: sampling seed offset for particle ensembles
    seed_offset: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "dirac"):
            raise ConfigError(f"init kind {self.kind!r} must be gaussian, uniform or dirac")
        if self.kind == "gaussian" and (self.mean is None or self.var is None):
            raise ConfigError("gaussian init needs mean and var")
        if self.kind == "dirac" and self.point is None:
            raise ConfigError("dirac init needs point")
        for k in ("mean", "var", "point"):
            v = getattr(self, k)
            if v is not None:
                object.__setattr__(self, k, _vec(v, k))


@dataclass(frozen=True)
class InitConfig:
    rho: MeasureInit
    mu: MeasureInit


@dataclass(frozen=True)
class SolverConfig:
    kind: str
    #: fv grid for ρ
    lo: Optional[float] = None
    hi: Optional[float] = None
    cells: Optional[int] = None
    #: fv grid for μ when μ is a density
    mu_lo: Optional[float] = None
    mu_hi: Optional[float] = None
    mu_cells: Optional[int] = None
    #: particle counts
    n_rho: Optional[int] = None
    n_mu: Optional[int] = None
    #: ρ steps per μ step (particles)
    mu_every: int = 1
    #: μ step size (particles); defaults to dt
    mu_dt: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SOLVERS:
            raise ConfigError(f"solver.kind: {self.kind!r} must be one of {SOLVERS}")
        if self.kind == "fv" and None in (self.lo, self.hi, self.cells):
            raise ConfigError("solver: fv needs lo, hi and cells")
        if self.kind == "particles" and self.n_rho is None:
            raise ConfigError("solver.n_rho: particles need n_rho")

    @property
    def rho_grid(self):
        return (float(self.lo), float(self.hi), int(self.cells))

    @property
    def mu_grid(self):
        if self.mu_cells is None:
            return None
        return (float(self.mu_lo), float(self.mu_hi), int(self.mu_cells))


@dataclass(frozen=True)
class DynamicsConfig:
    kind: str = "coupled"
    #: classifier value for fixed_x; defaults to the initial μ point
    x_value: Optional[Tuple[float, ...]] = None
    #: mean-shift baseline settings
    rounds: int = 16
    perturb_scale: float = 0.5
    inner_steps: int = 100
    x_bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in DYNAMICS:
            raise ConfigError(f"dynamics.kind: {self.kind!r} must be one of {DYNAMICS}")
        if self.x_value is not None:
            object.__setattr__(self, "x_value", _vec(self.x_value, "dynamics.x_value"))


@dataclass(frozen=True)
class TimeConfig:
    t_end: float
    dt: float
    snapshot_every: Optional[float] = None


@dataclass(frozen=True)
class ReferenceConfig:
    kind: str = "none"

    def __post_init__(self):
        if self.kind not in REFERENCES:
            raise ConfigError(f"reference.kind: {self.kind!r} must be one of {REFERENCES}")


@dataclass(frozen=True)
class DiagnosticsConfig:
    #: channel whose decay rate is reported as fitted_rate
    rate_channel: Optional[str] = None
    rate_window: Optional[Tuple[float, float]] = None
    #: further channels fitted with the default window, reported as rate_<channel>
    extra_rates: Tuple[str, ...] = ()
    #: compute classifier metrics with subgroups from the initial prediction
    classifier: bool = False


@dataclass(frozen=True)
class OutputsConfig:
    csv: bool = True
    svg: bool = True
    snapshots: bool = True


@dataclass(frozen=True)
class Check:
    metric: str
    min: Optional[float] = None
    max: Optional[float] = None
    #: theory constant scaling the lower bound: value ≥ min_factor · theory[min_ref]
    min_ref: Optional[str] = None
    min_factor: float = 1.0

    def __post_init__(self):
        if self.min is None and self.max is None and self.min_ref is None:
            raise ConfigError(f"checks: {self.metric!r} needs min, max or min_ref")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    description: str
    seed: int
    energy_table: dict
    solver: SolverConfig
    init: InitConfig
    dynamics: DynamicsConfig
    time: TimeConfig
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    checks: Tuple[Check, ...] = ()
    init_alt: Optional[InitConfig] = None
    source: Optional[str] = None
    digest: str = ""

    def energy(self) -> EnergySpec:
        return build_energy(self.energy_table, self.seed)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


# Energy -------------------------------------------------------------------

_ENERGY_KEYS = {"mode", "alpha", "beta", "dim_rho", "dim_mu", "coupling", "v1", "v2", "w1", "w2", "extras"}
_EXTRAS_KEYS = {"kappa", "x0", "pi"}
_PI_KEYS = {"kind", "mean", "var", "n", "seed"}


def build_population(table: dict, where: str, seed: int) -> ParticleEnsemble:
    _strict(table, _PI_KEYS, where)
    if table.get("kind", "gaussian") != "gaussian":
        raise ConfigError(f"{where}.kind: only gaussian populations are supported")
    for k in ("mean", "var", "n"):
        if k not in table:
            raise ConfigError(f"{where}.{k}: missing required key")
    return sample_gaussian(_vec(table["mean"], f"{where}.mean"), _vec(table["var"], f"{where}.var"),
                           int(table["n"]), seed=int(table.get("seed", seed + 1000)))


def build_energy(table: dict, seed: int = 0) -> EnergySpec:
    _strict(table, _ENERGY_KEYS, "energy")
    try:
        mode = Mode(table.get("mode", "cooperative"))
    except ValueError as exc:
        raise ConfigError(f"energy.mode: {table.get('mode')!r} must be cooperative or competitive") from exc
    kw: Dict[str, Any] = {"mode": mode}
    for key, kind in (("coupling", "coupling"), ("v1", "potential"), ("v2", "potential"),
                      ("w1", "kernel"), ("w2", "kernel")):
        if key in table:
            kw[key] = make_family(kind, table[key], f"energy.{key}")
    for key in ("alpha", "beta"):
        if key in table:
            kw[key] = float(table[key])
    for key in ("dim_rho", "dim_mu"):
        if key in table:
            kw[key] = int(table[key])
    if "extras" in table:
        ex = _strict(table["extras"], _EXTRAS_KEYS, "energy.extras")
        if "kappa" not in ex or "x0" not in ex:
            raise ConfigError("energy.extras: needs kappa and x0")
        pi = build_population(ex["pi"], "energy.extras.pi", seed) if "pi" in ex else None
        try:
            kw["extras"] = ApplicationExtras(float(ex["kappa"]), np.array(_vec(ex["x0"], "energy.extras.x0")), pi)
        except ValueError as exc:
            raise ConfigError(f"energy.extras: {exc}") from exc
    try:
        return EnergySpec(**kw)
    except ValueError as exc:
        raise ConfigError(f"energy: {exc}") from exc


# Loading ------------------------------------------------------------------

_TOP = {"name", "description", "seed", "energy", "solver", "init", "init_alt", "dynamics",
        "time", "reference", "diagnostics", "outputs", "checks"}


def _init(table, where):
    _strict(table, {"rho", "mu"}, where)
    if "rho" not in table or "mu" not in table:
        raise ConfigError(f"{where}: needs rho and mu")
    return InitConfig(_build(MeasureInit, table["rho"], f"{where}.rho"),
                      _build(MeasureInit, table["mu"], f"{where}.mu"))


def parse_config(raw: dict, source: Optional[str] = None, text: str = "") -> ScenarioConfig:
    _strict(raw, _TOP, "config")
    for k in ("name", "energy", "solver", "init", "time"):
        if k not in raw:
            raise ConfigError(f"config.{k}: missing required key")
    diag = dict(raw.get("diagnostics", {}))
    for k in ("rate_window",):
        if k in diag:
            diag[k] = tuple(float(v) for v in diag[k])
    if "extra_rates" in diag:
        diag["extra_rates"] = tuple(diag["extra_rates"])
    dyn = dict(raw.get("dynamics", {}))
    if "x_bounds" in dyn:
        dyn["x_bounds"] = tuple(float(v) for v in dyn["x_bounds"])
    cfg = ScenarioConfig(
        name=str(raw["name"]),
        description=str(raw.get("description", "")),
        seed=int(raw.get("seed", 0)),
        energy_table=raw["energy"],
        solver=_build(SolverConfig, raw["solver"], "solver", ("kind",)),
        init=_init(raw["init"], "init"),
        init_alt=_init(raw["init_alt"], "init_alt") if "init_alt" in raw else None,
        dynamics=_build(DynamicsConfig, dyn, "dynamics"),
        time=_build(TimeConfig, raw["time"], "time", ("t_end", "dt")),
        reference=_build(ReferenceConfig, raw.get("reference", {}), "reference"),
        diagnostics=_build(DiagnosticsConfig, diag, "diagnostics"),
        outputs=_build(OutputsConfig, raw.get("outputs", {}), "outputs"),
        checks=tuple(_build(Check, c, f"checks[{i}]", ("metric",))
                     for i, c in enumerate(raw.get("checks", []))),
        source=source,
        digest=hashlib.sha256(text.encode()).hexdigest() if text else "",
    )
    cfg.energy()  # validate families now so errors name the key
    return cfg


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: invalid TOML: {exc}") from exc
    return parse_config(raw, source=str(p), text=text)


CONFIG_DIR = Path(__file__).with_name("configs")


def shipped_configs() -> List[Path]:
    return sorted(CONFIG_DIR.glob("*.toml"))


def resolve_config(name_or_path) -> Path:
    """Accept a path or the stem of a shipped config."""
    p = Path(name_or_path)
    if p.exists():
        return p
    cand = CONFIG_DIR / f"{name_or_path}.toml"
    if cand.exists():
        return cand
    raise ConfigError(f"no config file or shipped scenario named {name_or_path!r}")
