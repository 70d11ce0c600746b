"""Command-line interface: ``twomass {model, analyze, simulate, report}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .controllers import (build_generalized_plant, build_weights, closed_loop_norm_check,
                          ff_transfer, sensitivity_yd, surrogate_plant)
from .lti import FrequencyResponse, LTIError, freq_response, stability_margins
from .plant import build_plant, eigenfrequency, plant_tf
from .signals import metrics_table_csv, metrics_table_json
from .sim import run_matrix

CONTROLLERS = ("fo", "hinf")


def _num(x: float):
    """JSON-safe float: infinities and NaN become strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_response(fr: FrequencyResponse, path: Path, fmt: str) -> Path:
    if fmt == "csv":
        path = path.with_suffix(".csv")
        fr.to_csv(path)
    else:
        path = path.with_suffix(".json")
        _dump(path, {"omega_rad_s": fr.grid.tolist(), "re": fr.values.real.tolist(),
                     "im": fr.values.imag.tolist(), "mag_db": fr.mag_db.tolist(),
                     "phase_deg": fr.phase_deg.tolist()})
    return path


def _selected(args) -> tuple:
    return CONTROLLERS if args.controller is None else (args.controller,)


def _tau(cfg: RunConfig, args) -> float:
    return cfg.plant.tau_n * (1.0 if args.tau_factor is None else args.tau_factor)


# ---------------------------------------------------------------------------

def cmd_model(cfg: RunConfig, args) -> int:
    p = cfg.plant
    g = plant_tf(p)
    poles, zeros = g.poles(), g.zeros()
    den_lead = g.den.leading
    summary = {
        "gain": _num(g.num.leading / den_lead),
        "zeros": [[_num(z.real), _num(z.imag)] for z in zeros],
        "poles": [[_num(q.real), _num(q.imag)] for q in poles],
        "omega0_rad_s": _num(eigenfrequency(p)),
        "tau_n_s": _num(p.tau_n),
        "A": build_plant(p)[0].A.tolist(),
        "degenerate": bool(p.zeta == 0.0),
        "damping_ratio_ok": bool(p.damping_ratio_ok),
    }
    lines = [
        f"G_yu(s) gain      {summary['gain']:.6g}",
        "zeros             " + ", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in zeros),
        "poles             " + ", ".join(f"{q.real:.6g}{q.imag:+.6g}j" for q in poles),
        f"omega0            {summary['omega0_rad_s']:.6g} rad/s",
        f"tau_n             {summary['tau_n_s']:.6g} s",
    ]
    if summary["degenerate"]:
        lines.append("warning: zeta = 0 removes the transmission zero; feedforward is undefined")
    print("\n".join(lines))
    _dump(args.out / "model.json", summary)
    return 0


def cmd_analyze(cfg: RunConfig, args) -> int:
    p = cfg.plant
    cs = cfg.controller_set()
    tau = _tau(cfg, args)
    g = plant_tf(p, tau)
    an = cfg.analysis
    which = args.what
    if which == "bode":
        w = np.geomspace(an["bode_band"][0], an["bode_band"][1], int(an["bode_points"]))
        for name in _selected(args):
            c = cs.loop(name)
            _write_response(freq_response(c * g, w), args.out / f"bode_loop_{name}", args.format)
            _write_response(freq_response(c, w), args.out / f"bode_controller_{name}", args.format)
        _write_response(freq_response(g, w), args.out / "bode_plant", args.format)
    elif which == "margins":
        out = {}
        for name in _selected(args):
            rep = stability_margins(cs.loop(name) * g, band=tuple(an["band"]))
            d = rep.as_dict()
            out[name] = {"omega_c": _num(d["omega_c"]), "phase_margin_deg": _num(d["phase_margin_deg"]),
                         "gain_margin": _num(d["gain_margin"]), "omega_pc": _num(d["omega_pc"])}
        if "hinf" in out:
            gp = build_generalized_plant(surrogate_plant(p), build_weights())
            nc = closed_loop_norm_check(gp, cs)
            out["hinf"]["lft_norm"] = _num(nc.gamma)
        for name, d in out.items():
            print(f"{name:5s} omega_c {d['omega_c']:.4f} rad/s  PM {d['phase_margin_deg']:.2f} deg  "
                  f"GM {d['gain_margin']:.3f}")
        _dump(args.out / "margins.json", {"tau_s": tau, "controllers": out})
    elif which == "sensitivity":
        out = {}
        w = np.geomspace(an["bode_band"][0], an["bode_band"][1], int(an["bode_points"]))
        for name in _selected(args):
            res = sensitivity_yd(cs.loop(name), p, tau, an["delay_model"], band=tuple(an["band"]))
            out[name] = {"peak": _num(res.peak), "omega_peak": _num(res.omega_peak),
                         "closed_loop_rhp_poles": res.rhp_count}
            _write_response(FrequencyResponse(w, res.evaluate(w)), args.out / f"sensitivity_{name}", args.format)
            print(f"{name:5s} ||S_yd||_inf {res.peak:.5f} at {res.omega_peak:.4f} rad/s"
                  + ("" if res.stable else f"  UNSTABLE ({res.rhp_count} RHP poles)"))
        _dump(args.out / "sensitivity.json", {"tau_s": tau, "delay_model": an["delay_model"],
                                               "controllers": out})
    elif which == "feedforward":
        w = np.geomspace(an["bode_band"][0], an["bode_band"][1], int(an["bode_points"]))
        _write_response(FrequencyResponse(w, ff_transfer(cs.c_fo, p, w)), args.out / "feedforward_fo",
                        args.format)
        _write_response(freq_response(cs.c_inf_1, w), args.out / "feedforward_hinf", args.format)
    return 0


def _run(cfg: RunConfig, args):
    scenarios = cfg.build_scenarios(seed=args.seed, controller=args.controller, tau_factor=args.tau_factor)
    if not scenarios:
        raise ConfigError("no scenario matches the selection")
    workers = int(cfg.simulation.get("workers", 0)) or None
    return run_matrix(scenarios, cfg.plant, cfg.controller_set(), workers=workers,
                      keep_results=not getattr(args, "no_traces", True))


def _write_metrics(rows, args) -> Path:
    reports = [r.metrics for r in rows]
    if args.format == "csv":
        path = args.out / "metrics.csv"
        path.write_text(metrics_table_csv(reports))
    else:
        path = args.out / "metrics.json"
        path.write_text(metrics_table_json(reports))
    return path


def cmd_simulate(cfg: RunConfig, args) -> int:
    rows = _run(cfg, args)
    step = max(1, int(args.decimate))
    for r in rows:
        if r.result is not None:
            res = r.result
            path = args.out / f"sim_{r.scenario.label}.csv"
            cols = np.column_stack([res.t, res.r, res.y, res.e, res.u, res.u_plant, res.x])[::step]
            np.savetxt(path, cols, delimiter=",", fmt="%.10g", comments="",
                       header="t,r,y,e,u,u_plant,x1,x2,x3,x4")
        status = "ok" if r.error is None else f"FAILED: {r.error}"
        m = r.metrics
        print(f"{r.scenario.label:28s} e_rms {1e3 * m.e_rms:9.4f} mm  e_max {1e3 * m.e_max_abs:9.4f} mm  "
              f"u_max {m.u_max_abs:7.3f} V  {status}")
    _write_metrics(rows, args)
    return 1 if any(r.error for r in rows) else 0


def cmd_report(cfg: RunConfig, args) -> int:
    args.no_traces = True
    rows = _run(cfg, args)
    path = _write_metrics(rows, args)
    sys.stdout.write(metrics_table_csv([r.metrics for r in rows]))
    print(f"wrote {path}")
    return 1 if any(r.error for r in rows) else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="disturbance seed override")
    common.add_argument("--tau-factor", type=float, default=None, help="delay as a multiple of tau_n")
    common.add_argument("--controller", choices=CONTROLLERS, default=None, help="restrict to one controller")
    common.add_argument("--format", choices=("csv", "json"), default="json", help="tabular output format")

    ap = argparse.ArgumentParser(prog="twomass", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("model", parents=[common], help="plant summary")
    an = sub.add_parser("analyze", parents=[common], help="frequency-domain analysis")
    an.add_argument("what", choices=("bode", "margins", "sensitivity", "feedforward"))
    sm = sub.add_parser("simulate", parents=[common], help="run scenarios and export traces")
    sm.add_argument("--decimate", type=int, default=10, help="write every n-th sample of each trace")
    sm.add_argument("--no-traces", action="store_true", help="only write the metrics table")
    sub.add_parser("report", parents=[common], help="metrics table for the scenario matrix")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        handler = {"model": cmd_model, "analyze": cmd_analyze, "simulate": cmd_simulate,
                   "report": cmd_report}[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LTIError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
