"""TOML run configuration: plant, controllers, analysis and scenarios."""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .approx import CompensatorSpec
from .controllers import FF_SHIFTS, ControllerSet, assemble_cfo, canonical_hinf_controller
from .plant import PlantParams, PlantState
from .signals import DisturbanceSpec, ReferenceSpec
from .sim import Scenario

__all__ = ["ConfigError", "RunConfig", "load_config", "default_config_text"]

_PLANT_KEYS = {"k", "m", "M", "eta", "zeta", "psi", "R", "g", "tau_n", "uss_fit", "k_m",
               "x1_range", "u_range"}
_CTRL_KEYS = {"balance_dc", "fo_source", "construction", "anchor", "nu", "omega_l", "omega_h", "n_cells"}
_ANALYSIS_KEYS = {"band", "bode_band", "bode_points", "delay_model"}
_SIM_KEYS = {"t_s", "horizon", "seed", "ff_shift", "disturbance_peak", "disturbance_band",
             "disturbance_start", "reference", "jitter", "ku_nonlinearity", "hard_stop", "saturate",
             "workers", "tau_factors"}
_SCENARIO_KEYS = {"controller", "experiment", "tau_factor", "x0", "horizon", "ff_shift", "jitter",
                  "ku_nonlinearity", "use_feedforward", "disturbance_peak", "seed"}
_SECTIONS = {"plant": _PLANT_KEYS, "controllers": _CTRL_KEYS, "analysis": _ANALYSIS_KEYS,
             "simulation": _SIM_KEYS}


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending line when known."""


def default_config_text() -> str:
    return resources.files("twomass").joinpath("data/default.toml").read_text()


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _fail(text: str, source: str, key: str, msg: str):
    line = _line_of(text, key)
    where = f"{source}:{line}" if line else source
    raise ConfigError(f"{where}: {msg}")


@dataclass(frozen=True)
class RunConfig:
    plant: PlantParams
    controllers: dict
    analysis: dict
    simulation: dict
    scenarios: tuple = field(default=())
    source: str = "<default>"

    def controller_set(self) -> ControllerSet:
        c = self.controllers
        cs = canonical_hinf_controller(balance_dc=c["balance_dc"])
        if c["fo_source"] == "assembled":
            spec = self.compensator_spec()
            cs = canonical_hinf_controller(balance_dc=c["balance_dc"], c_fo=assemble_cfo(spec, check=False))
        return cs

    def compensator_spec(self) -> CompensatorSpec:
        c = self.controllers
        return CompensatorSpec(z=2.0 / self.plant.tau_n, nu=c["nu"], omega_l=c["omega_l"],
                               omega_h=c["omega_h"], n_cells=c["n_cells"],
                               construction=c["construction"], anchor=c["anchor"])

    def reference_spec(self) -> ReferenceSpec:
        ref = self.simulation["reference"]
        return ReferenceSpec(ref["r0"], ref["r1"], ref["t_transition"], tuple(ref["start_times"]))

    def build_scenarios(self, seed: int | None = None, controller: str | None = None,
                        tau_factor: float | None = None) -> list[Scenario]:
        """Scenario list, optionally filtered by controller and delay factor."""
        s = self.simulation
        seed = s["seed"] if seed is None else seed
        entries = list(self.scenarios)
        if not entries:
            entries = [{"experiment": e, "controller": c, "tau_factor": f}
                       for e in ("disturbance", "tracking") for c in ("hinf", "fo")
                       for f in s["tau_factors"]]
        out = []
        for e in entries:
            if controller and e["controller"] != controller:
                continue
            if tau_factor is not None and abs(e.get("tau_factor", 1.0) - tau_factor) > 1e-12:
                continue
            exp = e.get("experiment", "tracking")
            dist = None
            if exp == "disturbance":
                dist = DisturbanceSpec(tuple(s["disturbance_band"]), e.get("disturbance_peak", s["disturbance_peak"]),
                                       e.get("seed", seed), s["disturbance_start"])
            x0 = e.get("x0")
            out.append(Scenario(
                controller=e["controller"], experiment=exp, tau_factor=float(e.get("tau_factor", 1.0)),
                x0=PlantState(*x0) if x0 is not None else None,
                horizon=float(e.get("horizon", s["horizon"])),
                reference=self.reference_spec() if exp == "tracking" else None,
                disturbance=dist, jitter_on=bool(e.get("jitter", s["jitter"])),
                ku_nonlinearity_on=bool(e.get("ku_nonlinearity", s["ku_nonlinearity"])),
                ff_shift=e.get("ff_shift", s["ff_shift"]),
                use_feedforward=bool(e.get("use_feedforward", True)),
                hard_stop=bool(s["hard_stop"]), saturate=bool(s["saturate"]), t_s=float(s["t_s"])))
        return out


def _merge(default: dict, user: dict) -> dict:
    out = dict(default)
    for k, v in user.items():
        out[k] = v
    return out


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read a TOML file layered over the packaged defaults.

    Raises
    ------
    ConfigError
        On syntax errors (with line and column), unknown keys or invalid
        values (with the line of the offending key).
    """
    base = tomllib.loads(default_config_text())
    if path is None:
        text, source, user = default_config_text(), "<default>", {}
    else:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read ({exc.strerror})") from None
        try:
            user = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{source}: {exc}") from None

    for sec in user:
        if sec not in _SECTIONS and sec != "scenario":
            _fail(text, source, sec, f"unknown section [{sec}]")
    for sec, keys in _SECTIONS.items():
        for k in user.get(sec, {}):
            if k not in keys:
                _fail(text, source, k, f"unknown key {k!r} in [{sec}]")
    scen = user.get("scenario", [])
    if not isinstance(scen, list):
        raise ConfigError(f"{source}: 'scenario' must be an array of tables ([[scenario]])")
    for e in scen:
        for k in e:
            if k not in _SCENARIO_KEYS:
                _fail(text, source, k, f"unknown key {k!r} in [[scenario]]")
        if "controller" not in e:
            raise ConfigError(f"{source}: every [[scenario]] needs a controller")

    plant_d = _merge(base["plant"], user.get("plant", {}))
    ctrl = _merge(base["controllers"], user.get("controllers", {}))
    analysis = _merge(base["analysis"], user.get("analysis", {}))
    sim = _merge(base["simulation"], user.get("simulation", {}))

    try:
        for k in ("x1_range", "u_range"):
            plant_d[k] = tuple(plant_d[k])
        if "uss_fit" in plant_d:
            plant_d["uss_fit"] = tuple(plant_d["uss_fit"])
        plant = PlantParams(**plant_d)
    except (TypeError, ValueError) as exc:
        key = next((k for k in user.get("plant", {}) if re.search(rf"\b{k}\b", str(exc))), "plant")
        _fail(text, source, key, f"invalid plant parameters: {exc}")
    if sim["ff_shift"] not in FF_SHIFTS:
        _fail(text, source, "ff_shift", f"ff_shift must be one of {FF_SHIFTS}")
    if analysis["delay_model"] not in ("exact", "pade1", "pade2"):
        _fail(text, source, "delay_model", "delay_model must be exact, pade1 or pade2")
    if ctrl["fo_source"] not in ("canonical", "assembled"):
        _fail(text, source, "fo_source", "fo_source must be canonical or assembled")
    for e in scen:
        if e["controller"] not in ("fo", "hinf"):
            _fail(text, source, "controller", f"unknown controller {e['controller']!r}")
        if e.get("experiment", "tracking") not in ("tracking", "disturbance"):
            _fail(text, source, "experiment", f"unknown experiment {e['experiment']!r}")
    cfg = RunConfig(plant, ctrl, analysis, sim, tuple(scen), source)
    try:
        cfg.compensator_spec()
        cfg.reference_spec()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg
