"""Command-line entry point ``newton-soliton``.

Subcommands write CSV (``#`` header lines), flat JSON reports and gnuplot
stubs into ``--out``. Exit codes: 0 success, 1 failed check, 2 bad
configuration or cache mismatch, 3 trajectory leaves the window.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dynamics as dy
from . import ground_state as gs
from . import linearized as lz
from . import modulation as md
from . import validation as val
from .config import ConfigError, config_hash, load_config
from .potentials import from_dict

log = logging.getLogger("newton_soliton")


def _header(cfg, args, extra=()):
    lines = [
        f"config_hash={config_hash(cfg)}",
        f"seed={cfg['campaign']['seed']}",
        f"grid_n={cfg['grid']['n']} box_length={cfg['grid']['box_length']}",
        f"eps={','.join(str(e) for e in cfg['dynamics']['eps'])}",
        f"command={args.command}",
        f"created={time.strftime('%Y-%m-%dT%H:%M:%S')}",
    ]
    return lines + list(extra)


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_csv(path, header_lines, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([f"{v:.12e}" if isinstance(v, float) else v for v in row])


def _gnuplot(path, data_file, using, title, logscale=False):
    text = [f"# plot {title}", "set key left top"]
    if logscale:
        text.append("set logscale xy")
    text.append("set datafile separator ','")
    text.append(f"plot '{Path(data_file).name}' using {using} every ::1 with linespoints title '{title}'")
    Path(path).write_text("\n".join(text) + "\n")


def _campaign(cfg, args):
    c = val.Campaign.from_config(cfg, quick=getattr(args, "quick", False))
    c.rebuild = args.rebuild
    return c


# subcommands ---------------------------------------------------------------


def cmd_ground_state(cfg, args, out: Path) -> int:
    c = _campaign(cfg, args)
    st = c.ground()
    orc = c.oracle()
    m = val.measure_ground_state(c, fresh=False)
    m.update(val.measure_decay(c))
    m.update({"multiplier": st.multiplier, "peak": st.peak, "energy": gs.ground_energy(st)})
    prof = st.radial_profile
    rows = [(float(s), float(r), float(orc(s)) if s <= orc.s[-1] else float("nan")) for s, r in zip(prof.s, prof.r)]
    _write_csv(out / "ground_profile.csv", _header(cfg, args), ["s", "r_grid", "r_shooting"], rows)
    _gnuplot(out / "ground_profile.gp", "ground_profile.csv", "1:2", "radial profile")
    _write_json(out / "ground_state.json", {"config_hash": config_hash(cfg), **m})
    print(json.dumps(m, default=_jsonable))
    return 0


def cmd_spectrum(cfg, args, out: Path) -> int:
    c = _campaign(cfg, args)
    report = {"config_hash": config_hash(cfg)}
    report.update({f"kernel_{k}": v for k, v in val.measure_kernels(c).items()})
    report.update({f"integral_{k}": v for k, v in val.measure_integrals(c).items()})
    lin = cfg["linearized"]
    for kind in ("plus", "minus", "plus_no_xi"):
        rep = lz.coercivity_probe(
            c.ground(), kind, n_probes=lin["n_probes"], block=lin["block"], maxiter=lin["maxiter"],
            tol=lin["tol"], seed=cfg["campaign"]["seed"],
        )
        for k, v in json.loads(rep.to_json()).items():
            report[f"{kind}_{k}"] = v
    _write_json(out / "spectrum.json", report)
    print(json.dumps(report, default=_jsonable))
    return 0


def cmd_coerce(cfg, args, out: Path) -> int:
    c = _campaign(cfg, args)
    m = cfg["modulation"]
    st = c.ground(c.modulation_n)
    rows = md.coercivity_experiment(
        st, np.geomspace(m["d_min"], m["d_max"], m["n_distances"]), m["n_per_distance"], seed=cfg["campaign"]["seed"]
    )
    md.write_coercivity_csv(rows, out / "coercivity.csv", _header(cfg, args))
    _gnuplot(out / "coercivity.gp", "coercivity.csv", "2:4", "ratio vs distance", logscale=True)
    ratios = np.array([r.ratio for r in rows])
    summary = {
        "config_hash": config_hash(cfg),
        "n_samples": len(rows),
        "min_ratio": float(ratios.min()),
        "median_ratio": float(np.median(ratios)),
        "max_ratio": float(ratios.max()),
    }
    _write_json(out / "coercivity.json", summary)
    print(json.dumps(summary))
    return 0 if summary["min_ratio"] > 0 else 1


def _evolution_config(cfg, eps, n=None) -> dy.EvolutionConfig:
    d = cfg["dynamics"]
    return dy.EvolutionConfig(
        eps=eps,
        potential=from_dict(d["potential"]),
        x0=tuple(d["x0"]),
        v0=tuple(d["v0"]),
        T_final=d["T_final"],
        dt=d["dt"],
        n=n or cfg["grid"]["n"],
        box_length=cfg["grid"]["box_length"],
        recenter=d["recenter"],
        recenter_every=d["recenter_every"],
        stride=d["stride"],
    )


def cmd_evolve(cfg, args, out: Path) -> int:
    eps = cfg["dynamics"]["eps"][0]
    n = cfg["campaign"]["quick_n"] if args.quick else cfg["grid"]["n"]
    ec = _evolution_config(cfg, eps, n)
    st = gs.load_or_compute(gs.Grid3(n, ec.box_length), cfg["ground_state"]["tol"], rebuild=args.rebuild)
    try:
        series = dy.evolve(ec, st, checkpoint=str(out / f"field_eps{eps:g}.bin"))
    except dy.WindowExitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    series.write_csv(out / f"series_eps{eps:g}.csv", _header(cfg, args))
    _gnuplot(out / f"series_eps{eps:g}.gp", f"series_eps{eps:g}.csv", "1:21", "soliton error")
    rep = {"config_hash": config_hash(cfg), "eps": eps, **dy.identity_checks(series), **dy.conservation_report(series)}
    _write_json(out / f"evolve_eps{eps:g}.json", rep)
    print(json.dumps(rep))
    return 0


def cmd_scale(cfg, args, out: Path) -> int:
    c = _campaign(cfg, args)
    sc = c.scaling()
    runs = sc.pop("runs")
    for eps, s in runs.items():
        s.write_csv(out / f"series_eps{eps:g}.csv", _header(cfg, args))
    ee = dy.energy_expansion_check(list(c.eps_list), c.ground(), from_dict(c.potential), c.x0)
    _write_csv(
        out / "scaling.csv",
        _header(cfg, args),
        ["eps", "sup_error", "center_deviation", "energy_defect", "grad_bound"],
        [
            (e, a, b, d, g)
            for e, a, b, d, g in zip(sc["eps"], sc["sup_error"], sc["center_deviation"], ee["defect"], sc["grad_bound"])
        ],
    )
    _gnuplot(out / "scaling.gp", "scaling.csv", "1:2", "sup H_eps error", logscale=True)
    flat = {
        "config_hash": config_hash(cfg),
        "error_slope": sc["slope"],
        "center_slope": sc["center_slope"],
        "energy_slope": ee["slope"],
        "min_psi_energy_gap": min(sc["min_psi_energy_gap"]),
    }
    _write_json(out / "scaling.json", flat)
    print(json.dumps(flat))
    return 0


def cmd_validate(cfg, args, out: Path) -> int:
    c = _campaign(cfg, args)
    results = val.run_all(c)
    lines = []
    for r in results:
        line = f"[{'PASS' if r['passed'] else 'FAIL'}] criterion {r['criterion']}: {r['name']}"
        lines.append(line)
        print(line)
    payload = {"config_hash": config_hash(cfg), "quick": bool(args.quick), "all_passed": all(r["passed"] for r in results)}
    for r in results:
        for k, v in r.items():
            if k not in ("criterion", "name"):
                payload[f"c{r['criterion']}_{k}"] = v
    _write_json(out / "validate.json", payload)
    return 0 if payload["all_passed"] else 1


COMMANDS = {
    "ground-state": cmd_ground_state,
    "spectrum": cmd_spectrum,
    "coerce": cmd_coerce,
    "evolve": cmd_evolve,
    "scale": cmd_scale,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="newton-soliton", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="TOML file layered over the defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int, help="points per axis")
    p.add_argument("--eps", type=str, help="comma-separated list")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--rebuild", action="store_true", help="recompute cached ground states")
    p.add_argument("--quick", action="store_true", help="small grids, short runs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides: dict = {}
    if args.seed is not None:
        overrides.setdefault("campaign", {})["seed"] = args.seed
    if args.grid is not None:
        overrides.setdefault("grid", {})["n"] = args.grid
    if args.eps is not None:
        try:
            eps = [float(e) for e in args.eps.split(",") if e]
        except ValueError:
            print(f"error: bad --eps {args.eps!r}", file=sys.stderr)
            return 2
        overrides.setdefault("dynamics", {})["eps"] = eps
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or Path(cfg["campaign"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except gs.CacheMismatchError as exc:
        print(f"error: {exc} (use --rebuild)", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
