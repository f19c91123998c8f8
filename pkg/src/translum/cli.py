"""``translum`` command line: link runs, Table 1 sweep, power budget, FUS sweeps.

Exit codes: 0 success, 2 usage or configuration error, 3 run dominated by
lost frames, 4 acoustic safety rejection.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, fus, harness, powerbudget
from .config import DEFAULT_CONFIG, SimConfig, apply_overrides, parse_config
from .core import ConfigError, SafetyViolation, config_digest

log = logging.getLogger("translum")

EXIT_OK, EXIT_CONFIG, EXIT_NO_SIGNAL, EXIT_SAFETY = 0, 2, 3, 4
SEED_ENV = "TRANSLUM_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    command: str
    config_digest: str
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    wall_seconds: float = 0.0

    def write(self, out_dir: Path) -> Path:
        missing = [o for o in self.outputs if not (out_dir / o).exists()]
        if missing:
            raise RuntimeError(f"manifest lists missing outputs: {missing}")
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(vars(self), indent=2) + "\n", encoding="utf-8")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".translum-write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror or exc}") from None
    return out


def _threads(n) -> int:
    if n is None:
        return os.cpu_count() or 1
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    return n


def _seed_override(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env, 0)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _load(args) -> SimConfig:
    if getattr(args, "config", None):
        base = _read_json(args.config)
    else:
        base = DEFAULT_CONFIG
    cfg = parse_config(apply_overrides(base, getattr(args, "set", None)))
    seed = _seed_override(args)
    if seed is not None:
        cfg = replace(cfg, link=replace(cfg.link, seed=seed))
    return cfg


def _read_json(path):
    # raw mapping, so --set overrides apply before validation
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


# ------------------------------------------------------------------- link run


def cmd_link_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args.out)
    started = _now()
    report = harness.run_link(cfg.link, cfg.tissue, cfg.receiver, args.frames,
                              workers=_threads(args.threads))
    doc = {
        "command": "link run",
        "frames": args.frames,
        "config": cfg.to_dict(),
        "report": report.to_dict(timing=False),
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    rec = {
        "rate_bps": cfg.link.data_rate, "modulation": cfg.link.modulation.value,
        "preset": cfg.tissue.name, "power_mw": None, "nj_per_bit": None,
        "report": report, "seconds": harness.airtime(report, cfg.link),
    }
    harness.write_sweep_csv([rec], out / "report.csv")
    RunManifest("link run", cfg.digest, started=started, finished=_now(),
                outputs=["report.json", "report.csv"],
                wall_seconds=report.wall_seconds).write(out)
    lost = report.sync_failures * 2 > report.frames_sent or report.bits_compared == 0
    ber = report.ber
    text = (
        f"frames {report.frames_sent}  bits {report.bits_compared}  errors {report.bit_errors}  "
        f"sync failures {report.sync_failures}\n"
        f"BER {'n/a' if ber is None else f'{ber:.3e}'}  "
        f"95% upper bound {report.ber_upper_95:.3e}\n"
        f"results in {out}"
    )
    _emit(args, {**doc, "out_dir": str(out), "no_signal": lost}, text)
    if lost:
        print("error: most frames were lost to missing signal or sync", file=sys.stderr)
        return EXIT_NO_SIGNAL
    return EXIT_OK


# ----------------------------------------------------------------- link table1


def cmd_table1(args) -> int:
    cfg = _load(args)
    rows = list(powerbudget.TABLE1)
    if args.rows:
        wanted = {k.strip().lower() for item in args.rows for k in item.split(",") if k.strip()}
        known = {r.key for r in rows}
        unknown = sorted(wanted - known)
        if unknown:
            raise ConfigError(f"unknown row key(s) {unknown}; choose from {sorted(known)}")
        rows = [r for r in rows if r.key in wanted]
    out = _out_dir(args.out)
    started = _now()
    table = [harness.SweepRow.from_point(r.point) for r in rows]
    records = harness.sweep(table, n_frames=args.frames, rx=cfg.receiver, base=cfg.link,
                            workers=_threads(args.threads))
    checks = [powerbudget.efficiency_check(r) for r in rows]
    harness.write_sweep_csv(records, out / "table1.csv", {
        "printed_nj_per_bit": [c["printed_nj_per_bit"] for c in checks],
        "nj_consistent": [str(c["consistent"]).lower() for c in checks],
    })
    RunManifest("link table1", config_digest({"config": cfg.to_dict(), "rows": [r.key for r in rows],
                                               "frames": args.frames}),
                started=started, finished=_now(), outputs=["table1.csv"],
                wall_seconds=sum((r["report"].wall_seconds for r in records if r["report"]), 0.0)
                ).write(out)
    doc_rows = []
    lines = [f"{'row':<12}{'preset':<14}{'nJ/bit':>8}{'printed':>9}  {'ok':<6}{'bits':>10}"
             f"{'errors':>8}{'BER<=':>11}"]
    for rec, chk in zip(records, checks):
        r = rec["report"]
        doc_rows.append({
            **chk, "rate_bps": rec["rate_bps"], "modulation": rec["modulation"],
            "power_mw": rec["power_mw"], "report": r.to_dict(timing=False) if r else None,
            "error": rec["error"],
        })
        lines.append(
            f"{chk['key']:<12}{chk['preset']:<14}{chk['computed_nj_per_bit']:>8.3f}"
            f"{chk['printed_nj_per_bit']:>9.2f}  {'yes' if chk['consistent'] else 'FLAG':<6}"
            + (f"{r.bits_compared:>10}{r.bit_errors:>8}{r.ber_upper_95:>11.2e}" if r
               else f"  {rec['error']}")
        )
    _emit(args, {"command": "link table1", "rows": doc_rows, "out_dir": str(out)},
          "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------- budget


def cmd_budget(args) -> int:
    try:
        f = powerbudget.feasibility(args.channels, args.fs, args.bits, args.rate)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    doc = {"command": "budget", "channels": args.channels, "fs_hz": args.fs,
           "bits": args.bits, **f.to_dict()}
    text = (
        f"required (raw)     {float(f.required):>14,.0f} bit/s\n"
        f"required (framed)  {float(f.framed):>14,.0f} bit/s  (x 1552/1520)\n"
        f"link rate          {f.link_rate:>14,.0f} bit/s\n"
        f"raw_ok    {str(f.raw_ok).lower()}\n"
        f"framed_ok {str(f.framed_ok).lower()}\n"
        f"margin    {f.margin:,.0f} bit/s"
    )
    _emit(args, doc, text)
    return EXIT_OK


# ------------------------------------------------------------------------- fus


def _fus_path(args, cfg: SimConfig):
    path = cfg.fus.path
    if args.p0 is not None:
        path = path.at(P0=args.p0 * 1e3)
    if args.f is not None:
        path = path.at(f=args.f * 1e6)
    return fus.safety_gate(path, cfg.fus.limits)


def _grid(lo, hi, n, name, log_spaced=False):
    if n < 2:
        raise ConfigError(f"--{name}-steps must be >= 2")
    if not (lo > 0 and hi > 0):
        raise ConfigError(f"--{name} bounds must be positive")
    if not hi > lo:
        raise ConfigError(f"--{name}-min must be below --{name}-max")
    return np.geomspace(lo, hi, n) if log_spaced else np.linspace(lo, hi, n)


def cmd_fus_sweep(args) -> int:
    f_grid = _grid(args.f_min, args.f_max, args.f_steps, "f")
    r_grid = _grid(args.r_min, args.r_max, args.r_steps, "r", log_spaced=True)
    cfg = _load(args)
    path = _fus_path(args, cfg)
    out = _out_dir(args.out)
    started = _now()
    surface = fus.harvest_sweep(cfg.fus.element, path, f_grid, r_grid)
    surface.to_csv(out / "fus_sweep.csv")
    outputs = ["fus_sweep.csv"]
    i, j = surface.argmax()
    if args.svg:
        _plot_sweep(surface, out / "fus_sweep.svg")
        outputs.append("fus_sweep.svg")
    RunManifest("fus sweep", config_digest({"fus": cfg.fus.to_dict(), "P0": path.P0,
                                             "f": f_grid.tolist(), "r": r_grid.tolist()}),
                started=started, finished=_now(), outputs=outputs).write(out)
    best = {"f_hz": float(surface.f_grid[i]), "r_ohm": float(surface.r_grid[j]),
            "power_w": surface.max_power,
            "optimal_load_ohm": fus.optimal_load(cfg.fus.element, float(surface.f_grid[i]))}
    text = (f"grid {f_grid.size} x {r_grid.size}, P0 {path.P0 / 1e3:g} kPa\n"
            f"max {best['power_w'] * 1e3:.3f} mW at f = {best['f_hz'] / 1e3:.1f} kHz, "
            f"R = {best['r_ohm']:.0f} ohm (1/(2 pi f C0) = {best['optimal_load_ohm']:.0f} ohm)\n"
            f"results in {out}")
    _emit(args, {"command": "fus sweep", "best": best, "temperature_rise_c":
                 fus.thermal_estimate(path), "out_dir": str(out)}, text)
    return EXIT_OK


def cmd_fus_array(args) -> int:
    cfg = _load(args)
    path = _fus_path(args, cfg)
    name = args.preset or cfg.fus.array
    elements = fus.array_preset(name)
    out = _out_dir(args.out)
    started = _now()
    res = fus.array_power(elements, path, per_element_tuning=not args.untuned)
    res.to_csv(out / "fus_array.csv")
    outputs = ["fus_array.csv"]
    if args.svg:
        _plot_array(res, out / "fus_array.svg")
        outputs.append("fus_array.svg")
    RunManifest("fus array", config_digest({"fus": cfg.fus.to_dict(), "preset": name,
                                             "P0": path.P0, "tuned": not args.untuned}),
                started=started, finished=_now(), outputs=outputs).write(out)
    lines = [f"{'element':>7}{'orient deg':>12}{'f kHz':>10}{'power mW':>10}"]
    for k, (o, f, p) in enumerate(zip(res.orientations, res.frequencies, res.per_element), 1):
        lines.append(f"{k:>7}{o:>12.1f}{f / 1e3:>10.1f}{p * 1e3:>10.3f}")
    lines.append(f"total {res.total * 1e3:.3f} mW  (dT {fus.thermal_estimate(path):.2f} degC)")
    _emit(args, {"command": "fus array", "preset": name, "tuned": not args.untuned,
                 **res.to_dict(), "temperature_rise_c": fus.thermal_estimate(path),
                 "out_dir": str(out)}, "\n".join(lines))
    return EXIT_OK


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise ConfigError("--svg needs matplotlib (pip install 'translum[plot]')") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _plot_sweep(surface, path):
    plt = _pyplot()
    i, j = surface.argmax()
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    a.plot(surface.f_grid / 1e3, surface.power[:, j] * 1e3)
    a.set_xlabel("frequency (kHz)")
    a.set_ylabel("power (mW)")
    a.set_title(f"R = {surface.r_grid[j]:.0f} ohm")
    b.semilogx(surface.r_grid, surface.power[i] * 1e3)
    b.set_xlabel("load (ohm)")
    b.set_title(f"f = {surface.f_grid[i] / 1e3:.1f} kHz")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_array(res, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(1, len(res.per_element) + 1), np.asarray(res.per_element) * 1e3)
    ax.set_xlabel("element")
    ax.set_ylabel("power (mW)")
    ax.set_title(f"total {res.total * 1e3:.2f} mW")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------- parser


def _positive_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="translum", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"translum {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp, out_default, config=True):
        if config:
            sp.add_argument("--config", help="JSON config file (default: embedded defaults)")
            sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                            help="override one config key; repeatable")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--json", action="store_true", help="print one JSON document")

    link = sub.add_parser("link", help="optical link simulation")
    lsub = link.add_subparsers(dest="link_command", parser_class=_Parser, required=True)

    run = lsub.add_parser("run", help="BER run for one configuration")
    common(run, "translum-run")
    run.add_argument("--seed", type=int, help=f"master seed (overrides {SEED_ENV} and config)")
    run.add_argument("--frames", type=_positive_int, default=100)
    run.add_argument("--threads", type=_positive_int, help="worker processes (default: all cores)")
    run.set_defaults(func=cmd_link_run)

    def table1_args(sp):
        common(sp, "translum-table1")
        sp.add_argument("--rows", action="append", metavar="KEY",
                        help="row filter such as 5mbps-pwm; repeatable or comma separated")
        sp.add_argument("--frames", type=_positive_int, default=100, help="frames per row")
        sp.add_argument("--threads", type=_positive_int)
        sp.add_argument("--seed", type=int)
        sp.set_defaults(func=cmd_table1)

    table1_args(lsub.add_parser("table1", help="Table 1 sweep"))
    table1_args(sub.add_parser("table1", help="alias of 'link table1'"))

    b = sub.add_parser("budget", help="channel count vs link rate")
    b.add_argument("--channels", type=int, required=True)
    b.add_argument("--fs", type=float, required=True, help="per-channel sample rate, Hz")
    b.add_argument("--bits", type=int, required=True, help="resolution per sample")
    b.add_argument("--rate", type=float, required=True, help="link rate, bit/s")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_budget)

    f = sub.add_parser("fus", help="focused-ultrasound power transfer")
    fsub = f.add_subparsers(dest="fus_command", parser_class=_Parser, required=True)

    def fus_common(sp, out_default):
        common(sp, out_default)
        sp.add_argument("--p0", type=float, help="source pressure, kPa")
        sp.add_argument("--f", type=float, help="drive frequency, MHz")
        sp.add_argument("--svg", action="store_true", help="also render an SVG plot")

    sw = fsub.add_parser("sweep", help="frequency x load sweep of one element")
    fus_common(sw, "translum-fus")
    sw.add_argument("--f-min", type=float, default=0.8e6)
    sw.add_argument("--f-max", type=float, default=1.2e6)
    sw.add_argument("--f-steps", type=int, default=81)
    sw.add_argument("--r-min", type=float, default=100.0)
    sw.add_argument("--r-max", type=float, default=1e5)
    sw.add_argument("--r-steps", type=int, default=61)
    sw.set_defaults(func=cmd_fus_sweep)

    ar = fsub.add_parser("array", help="harvested power of an element array")
    fus_common(ar, "translum-fus")
    ar.add_argument("--preset", choices=sorted(fus.ARRAY_PRESETS))
    ar.add_argument("--untuned", action="store_true",
                    help="drive all elements at the path frequency")
    ar.set_defaults(func=cmd_fus_array)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except SafetyViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAFETY
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("done in %.2f s", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
