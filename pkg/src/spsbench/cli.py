"""Command-line entry point: simulate, correlate, analyze, sweep, reproduce.

Exit codes: 0 success, 2 config or usage error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import yaml

from .correlate import correlate_files, decay_histogram, g2_zero, hom_visibility
from .exceptions import CalibrationError, ConfigError, DipNotResolvableError, DomainError, FormatError, NumericalError
from .fitting import fit_decay, t2_from_dip
from .interferometer import route_hbt, route_hom
from .outputs import provenance, write_csv, write_histogram, write_json, write_preset
from .pipeline import PRESETS, VERSION, RunConfig, canonical_hash, correlation_range, rate_sweep
from .source import simulate_emission
from .tagio import read_header, read_timetags, write_photon_sidecar, write_timetags

OUT_ENV = "SPSBENCH_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def load_yaml(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return doc or {}


def load_config(path, seed=None) -> RunConfig:
    doc = load_yaml(path) if path else {}
    if seed is not None:
        doc["seed"] = seed
    return RunConfig.from_dict(doc)


def output_dir(args, config: RunConfig | None = None) -> Path:
    if args.out:
        out = Path(args.out)
    elif os.environ.get(OUT_ENV):
        out = Path(os.environ[OUT_ENV])
    elif config is not None:
        out = Path(config.output_dir)
    else:
        out = Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = output_dir(args, cfg)
    photons = simulate_emission(cfg.emitter, cfg.train, cfg.seed, args.threads)
    if cfg.bench.topology == "HBT":
        s1, s2 = route_hbt(photons, cfg.detector, cfg.seed, cfg.bench.splitter_ratio)
    else:
        s1, s2 = route_hom(photons, cfg.bench, cfg.detector, cfg.seed)
    h = cfg.config_hash()
    s1.config_hash = s2.config_hash = bytes.fromhex(h)
    files = [write_timetags(out / "ch0.ptt", s1), write_timetags(out / "ch1.ptt", s2)]
    if not args.no_sidecar:
        files.append(write_photon_sidecar(out / "photons.csv", photons))
    doc = dict(provenance(h, cfg.seed), config=cfg.to_dict(), period_ps=cfg.train.period,
               accounting={"ch0": s1.accounting, "ch1": s2.accounting},
               files=[f.name for f in files])
    write_json(out / "run.json", doc)
    print(f"wrote {len(s1)} + {len(s2)} tags to {out}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    out = output_dir(args)
    hist = correlate_files(args.a, args.b, args.bin_width, args.range, threads=args.threads)
    h = canonical_hash({"a": read_header(args.a)["config_hash"].hex(), "b": read_header(args.b)["config_hash"].hex(),
                        "bin_width": args.bin_width, "range": args.range})
    meta = provenance(h, read_header(args.a)["seed"])
    write_histogram(out / "histogram.csv", hist, meta)
    write_json(out / "histogram.json", dict(meta, total_pairs=hist.total_pairs, nbins=hist.nbins,
                                           bin_width_ps=hist.bin_width, range_ps=hist.range,
                                           channel_pair=list(hist.channel_pair)))
    print(f"{hist.total_pairs} coincidences in {hist.nbins} bins")
    return EXIT_OK


def _analysis_plan(args) -> dict:
    plan = load_yaml(args.config) if args.config else {}
    plan = plan.get("analysis", plan)
    for key in ("hbt", "co", "cross", "decay", "period", "bin_width", "b_factor", "g2", "model", "irf_sigma"):
        val = getattr(args, key, None)
        if val is not None:
            plan[key] = val
    return plan


def _pair_files(plan, key):
    files = plan.get(key)
    if files is None:
        return None
    if not isinstance(files, (list, tuple)) or len(files) != 2:
        raise UsageError(f"{key}: expects two timetag files")
    return files


def cmd_analyze(args) -> int:
    plan = _analysis_plan(args)
    out = output_dir(args)
    if "period" not in plan:
        raise UsageError("analysis needs the pulse period (--period)")
    period = float(plan["period"])
    bw = int(plan.get("bin_width", 10))
    rng = correlation_range(period)
    hbt, co, cross = _pair_files(plan, "hbt"), _pair_files(plan, "co"), _pair_files(plan, "cross")
    if co is not None and cross is None:
        raise UsageError("HOM analysis needs both --co and --cross files")
    if cross is not None and co is None:
        raise UsageError("HOM analysis needs both --co and --cross files")
    if hbt is None and co is None and not plan.get("decay"):
        raise UsageError("nothing to analyse: give --hbt, --co/--cross or --decay")

    inputs = [f for f in (hbt or []) + (co or []) + (cross or []) + ([plan["decay"]] if plan.get("decay") else [])]
    hashes = [read_header(f)["config_hash"].hex() for f in inputs]
    h = canonical_hash({"inputs": hashes, "plan": {k: v for k, v in plan.items() if k not in ("hbt", "co", "cross", "decay")}})
    meta = provenance(h, read_header(inputs[0])["seed"])
    result = dict(meta, period_ps=period, bin_width_ps=bw, peak_area_errors="poisson")

    g2 = plan.get("g2")
    if hbt is not None:
        hist = correlate_files(hbt[0], hbt[1], bw, rng, threads=args.threads)
        value, err = g2_zero(hist, period)
        result["g2_zero"] = {"value": value, "error": err}
        write_histogram(out / "g2_histogram.csv", hist, meta)
        g2 = value if g2 is None else g2
    if co is not None:
        hco = correlate_files(co[0], co[1], bw, rng, threads=args.threads)
        hcr = correlate_files(cross[0], cross[1], bw, rng, threads=args.threads)
        rep = hom_visibility(hco, hcr, period, float(g2 or 0.0), float(plan.get("b_factor", 2.0)))
        result["visibility"] = {"v_raw": rep.v_raw, "v_raw_err": rep.v_raw_err, "v_corrected": rep.v_corrected,
                                "g2_zero": rep.g2_zero, "b_factor": rep.b_factor}
        write_histogram(out / "hom_co.csv", hco, meta)
        write_histogram(out / "hom_cross.csv", hcr, meta)
        try:
            result["t2_fit"] = t2_from_dip(hco, hcr).to_dict()
        except DipNotResolvableError as exc:
            result["t2_fit"] = {"error": str(exc)}
    if plan.get("decay"):
        tags = read_timetags(plan["decay"]).tags
        t, c = decay_histogram(tags, period, float(plan.get("decay_bin_width", 2.0)))
        fit = fit_decay(t, c, plan.get("model", "exp"), plan.get("irf_sigma"))
        result["decay_fit"] = fit.to_dict()
        write_csv(out / "decay_histogram.csv", ("bin_center_ps", "counts"), zip(t.tolist(), c.tolist()), meta)
    write_json(out / "analysis.json", result)
    print(f"analysis written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = output_dir(args, cfg)
    mults = tuple(int(m) for m in args.multipliers.split(","))
    quantum = tuple(int(m) for m in args.quantum.split(",")) if args.quantum else ()
    rows = rate_sweep(cfg.emitter, cfg.detector, mults, cfg.train.base_rate, cfg.train.n_pulses,
                      cfg.train.pulse_fwhm, cfg.train.pulse_area, cfg.seed, args.threads, quantum,
                      cfg.bench.t2_pure_dephasing, args.b_factor)
    cols = list(rows[0])
    meta = provenance(canonical_hash({"config": cfg.config_hash(), "multipliers": mults, "quantum": quantum,
                                      "b_factor": args.b_factor}), cfg.seed)
    write_csv(out / "sweep.csv", cols, [tuple(r[c] for c in cols) for r in rows], meta)
    write_json(out / "sweep.json", dict(meta, rows=rows))
    print(f"sweep over {len(rows)} multipliers written to {out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = output_dir(args)
    kwargs = {"threads": args.threads}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    result = PRESETS[args.preset](**kwargs)
    write_preset(result, out)
    failed = [c["name"] for c in result.checks if not c["passed"]]
    for c in result.checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']:.4g} (target {c['target']})")
    return EXIT_OK if not failed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spsbench", description="Single-photon source benchmark simulator.")
    p.add_argument("--version", action="version", version=VERSION)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config's output_dir)")

    sp = sub.add_parser("simulate", help="simulate detector timetags")
    common(sp)
    sp.add_argument("--no-sidecar", action="store_true", help="skip the truth-level photon CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("correlate", help="correlate two timetag files")
    common(sp, config=False)
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--bin-width", type=int, default=10)
    sp.add_argument("--range", type=int, default=40000)
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("analyze", help="g2(0), HOM visibility and fits from timetag files")
    common(sp)
    sp.add_argument("--hbt", nargs=2, metavar=("A", "B"))
    sp.add_argument("--co", nargs=2, metavar=("A", "B"))
    sp.add_argument("--cross", nargs=2, metavar=("A", "B"))
    sp.add_argument("--decay", metavar="FILE")
    sp.add_argument("--period", type=float)
    sp.add_argument("--bin-width", type=int)
    sp.add_argument("--b-factor", type=float)
    sp.add_argument("--g2", type=float, help="g2(0) for the visibility correction")
    sp.add_argument("--model", choices=("exp", "biexp", "exp_irf"))
    sp.add_argument("--irf-sigma", type=float)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="count rate versus pulse multiplication")
    common(sp)
    sp.add_argument("--multipliers", default="1,2,4,8,16")
    sp.add_argument("--quantum", default="", help="multipliers at which g2(0) and V_HOM are measured")
    sp.add_argument("--b-factor", type=float, default=1.0)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("reproduce", help="run a figure preset")
    common(sp, config=False)
    sp.add_argument("preset", choices=sorted(PRESETS))
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CalibrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
