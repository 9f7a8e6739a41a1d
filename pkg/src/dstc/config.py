"""Run configuration: a TOML document validated into frozen dataclasses.

Every section and key is optional; missing values fall back to
:mod:`dstc.defaults`.  Unknown keys and ill-typed values raise
:class:`~dstc.errors.ConfigError` naming the offending field path, e.g.
``rf.n_patterns``.  The resolved configuration has a canonical JSON form
whose SHA-256 is the config hash written into every manifest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import defaults
from .dynamics import AdExParams, DpiParams, SynapseType
from .ei import Balance
from .energy import EnergyCostTable, Variant
from .errors import ConfigError, DstcError
from .fabric import Distribution, Fabric, MismatchModel

_NUM = (int, float)


@dataclass(frozen=True)
class FabricSpec:
    seed: int = 0
    cv: float = 0.2
    distribution: str = "normal"
    floor: float = 0.05
    chips: int = 1
    cores: int = 1
    # only "subtractive" is implemented; kept visible as a setting
    shunting: str = "subtractive"
    per_param: Mapping[str, float] = field(default_factory=dict)

    def mismatch(self) -> MismatchModel:
        return MismatchModel(self.cv, self.seed, Distribution(self.distribution), self.per_param, self.floor)


@dataclass(frozen=True)
class DelaysSpec:
    n: int = 256
    dt: float = 0.01


@dataclass(frozen=True)
class RfSpec:
    n_patterns: int = 2000
    neurons: int = 4
    k: int = 4
    t_min: float = defaults.T_MIN
    t_max: float = defaults.T_MAX
    window: float = defaults.RESPONSE_WINDOW


@dataclass(frozen=True)
class TuneSpec:
    n_configs: int = 200
    trials: int = 10
    k: int = 4
    strict: bool = True


@dataclass(frozen=True)
class EnergySpec:
    k_max: int = 10
    costs: Mapping[str, int] = field(default_factory=dict)

    def table(self) -> EnergyCostTable:
        return EnergyCostTable.from_mapping(self.costs)


@dataclass(frozen=True)
class SimulateSpec:
    variant: str = "dSTC"
    columns: int = 5
    k: int = 4
    horizon: float = 200.0
    inhibition: bool = False
    # column index (as a string key) -> A spike times in ms
    inputs: Mapping[str, tuple[float, ...]] = field(default_factory=lambda: {"0": (10.0,)})


@dataclass(frozen=True)
class Nominals:
    b2_neuron: AdExParams = defaults.B2_NEURON
    forward: DpiParams = defaults.FORWARD
    balance: Balance = defaults.BALANCE


@dataclass(frozen=True)
class RunConfig:
    fabric: FabricSpec = field(default_factory=FabricSpec)
    dt: float = defaults.B2_DT
    delays: DelaysSpec = field(default_factory=DelaysSpec)
    rf: RfSpec = field(default_factory=RfSpec)
    tune: TuneSpec = field(default_factory=TuneSpec)
    energy: EnergySpec = field(default_factory=EnergySpec)
    simulate: SimulateSpec = field(default_factory=SimulateSpec)
    nominal: Nominals = field(default_factory=Nominals)

    @property
    def seed(self) -> int:
        return self.fabric.seed

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, fabric=dataclasses.replace(self.fabric, seed=int(seed)))

    def make_fabric(self) -> Fabric:
        return Fabric(self.fabric.mismatch(), self.fabric.chips, self.fabric.cores,
                      neuron_nominal=self.nominal.b2_neuron)

    def to_dict(self) -> dict:
        return _plain(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_toml(self) -> str:
        return _to_toml(self.to_dict())


# -- plain-data conversion ----------------------------------------------------


def _plain(obj: Any) -> Any:
    if isinstance(obj, Balance):
        return {"tau_inh": obj.tau_inh, "tau_exc": obj.tau_exc, "ratio": obj.ratio,
                "weight_exc": obj.weight_exc, "min_rebound": obj.min_rebound}
    if isinstance(obj, DpiParams):
        return {"tau_syn": obj.tau_syn, "I_w": obj.I_w}
    if isinstance(obj, AdExParams):
        return obj.as_dict()
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in sorted(obj.items())}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))


def _to_toml(d: Mapping, prefix: str = "") -> str:
    scalars = [(k, v) for k, v in d.items() if not isinstance(v, Mapping)]
    tables = [(k, v) for k, v in d.items() if isinstance(v, Mapping)]
    out = []
    if prefix and (scalars or not tables):
        out.append(f"[{prefix}]")
    out += [f"{json.dumps(k) if not k.isidentifier() else k} = {_toml_value(v)}" for k, v in scalars]
    if out:
        out.append("")
    for k, v in tables:
        key = k if k.isidentifier() else json.dumps(k)
        out.append(_to_toml(v, f"{prefix}.{key}" if prefix else key))
    return "\n".join(out)


# -- validation ------------------------------------------------------------------


def _check_keys(tab: Mapping, allowed, path: str) -> None:
    if not isinstance(tab, Mapping):
        raise ConfigError(path or "<root>", "expected a table")
    for k in tab:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")


def _get(tab: Mapping, key: str, kind, default, path: str, check=None):
    p = f"{path}.{key}" if path else key
    if key not in tab:
        return default
    v = tab[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, _NUM):
            raise ConfigError(p, f"expected a number, got {v!r}")
        v = float(v)
    elif kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(p, f"expected an integer, got {v!r}")
    elif not isinstance(v, kind):
        raise ConfigError(p, f"expected {kind.__name__}, got {v!r}")
    if check is not None:
        msg = check(v)
        if msg:
            raise ConfigError(p, msg)
    return v


def _pos(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _section(raw: Mapping, name: str, cls, checks: Mapping[str, Any] | None = None):
    tab = raw.get(name, {})
    base = cls()
    allowed = [f.name for f in fields(cls)]
    _check_keys(tab, allowed, name)
    kw = {}
    for f in fields(cls):
        default = getattr(base, f.name)
        if isinstance(default, Mapping):
            continue
        kind = type(default)
        kw[f.name] = _get(tab, f.name, kind, default, name, (checks or {}).get(f.name))
    return kw, tab


def _params(tab: Mapping, path: str, base, allowed, checks=None):
    _check_keys(tab, allowed, path)
    kw = {k: _get(tab, k, float, getattr(base, k), path, (checks or {}).get(k)) for k in allowed}
    return kw


def from_mapping(raw: Mapping) -> RunConfig:
    """Validate a parsed TOML document into a :class:`RunConfig`."""
    _check_keys(raw, [f.name for f in fields(RunConfig)], "")

    kw, tab = _section(raw, "fabric", FabricSpec, {
        "seed": _nonneg, "cv": _nonneg, "floor": _pos,
        "chips": lambda v: None if 1 <= v <= 4 else "must be in 1..4",
        "cores": lambda v: None if 1 <= v <= 4 else "must be in 1..4",
        "distribution": lambda v: None if v in {d.value for d in Distribution} else
        f"must be one of {sorted(d.value for d in Distribution)}",
        "shunting": lambda v: None if v == "subtractive" else "only 'subtractive' is implemented",
    })
    pp = tab.get("per_param", {})
    _check_keys(pp, list(pp), "fabric.per_param")
    kw["per_param"] = {k: _get(pp, k, float, 0.0, "fabric.per_param", _nonneg) for k in sorted(pp)}
    fabric = FabricSpec(**kw)

    dt = _get(raw, "dt", float, defaults.B2_DT, "", _pos)
    delays = DelaysSpec(**_section(raw, "delays", DelaysSpec, {
        "n": lambda v: None if v >= 1 else "must be >= 1",
        "dt": lambda v: None if 0 < v <= 0.1 else "must be in (0, 0.1]",
    })[0])
    rf_kw, _ = _section(raw, "rf", RfSpec, {
        "n_patterns": _nonneg, "neurons": lambda v: None if v >= 1 else "must be >= 1",
        "k": _nonneg, "t_min": _pos, "t_max": _pos, "window": _pos,
    })
    if rf_kw["t_min"] > rf_kw["t_max"]:
        raise ConfigError("rf.t_min", "must not exceed rf.t_max")
    rf = RfSpec(**rf_kw)
    tune = TuneSpec(**_section(raw, "tune", TuneSpec, {
        "n_configs": lambda v: None if v >= 1 else "must be >= 1",
        "trials": lambda v: None if v >= 1 else "must be >= 1",
        "k": lambda v: None if 0 <= v <= 31 else "must be in 0..31",
    })[0])

    kw, tab = _section(raw, "energy", EnergySpec, {"k_max": _nonneg})
    costs = tab.get("costs", {})
    _check_keys(costs, list(EnergyCostTable().to_dict()), "energy.costs")
    kw["costs"] = {k: _get(costs, k, int, 0, "energy.costs", _nonneg) for k in sorted(costs)}
    energy = EnergySpec(**kw)

    kw, tab = _section(raw, "simulate", SimulateSpec, {
        "variant": lambda v: None if v in {x.value for x in Variant} else "must be 'STC' or 'dSTC'",
        "columns": lambda v: None if v >= 1 else "must be >= 1",
        "k": _nonneg, "horizon": _pos,
    })
    if "inputs" in tab:
        inp = tab["inputs"]
        _check_keys(inp, list(inp), "simulate.inputs")
        parsed = {}
        for key, times in inp.items():
            p = f"simulate.inputs.{key}"
            if not key.isdigit():
                raise ConfigError(p, "column keys must be non-negative integers")
            if not isinstance(times, list) or any(isinstance(t, bool) or not isinstance(t, _NUM) for t in times):
                raise ConfigError(p, "expected a list of spike times")
            parsed[str(int(key))] = tuple(float(t) for t in times)
        kw["inputs"] = dict(sorted(parsed.items(), key=lambda kv: int(kv[0])))
    simulate = SimulateSpec(**kw)

    nom = raw.get("nominal", {})
    _check_keys(nom, ["b2_neuron", "forward", "balance"], "nominal")
    def build(name, make):
        try:
            return make()
        except ConfigError:
            raise
        except (DstcError, ValueError) as e:
            raise ConfigError(f"nominal.{name}", str(e)) from None

    b2 = build("b2_neuron", lambda: AdExParams(**_params(
        nom.get("b2_neuron", {}), "nominal.b2_neuron", defaults.B2_NEURON, list(defaults.B2_NEURON.as_dict()))))
    fw = _params(nom.get("forward", {}), "nominal.forward", defaults.FORWARD, ["tau_syn", "I_w"])
    forward = build("forward", lambda: DpiParams(fw["tau_syn"], fw["I_w"], SynapseType.FAST_EXC))
    balance = build("balance", lambda: Balance(**_params(
        nom.get("balance", {}), "nominal.balance", defaults.BALANCE,
        ["tau_inh", "tau_exc", "ratio", "weight_exc", "min_rebound"])))
    return RunConfig(fabric, dt, delays, rf, tune, energy, simulate, Nominals(b2, forward, balance))


def load(path: str | Path | None) -> RunConfig:
    """Read and validate a TOML config; ``None`` gives the all-defaults config."""
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        raw = tomllib.loads(p.read_text())
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {p}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<file>", f"invalid TOML: {e}") from None
    return from_mapping(raw)
