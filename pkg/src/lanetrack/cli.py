"""Command-line runner: simulate, detect, track, evaluate, bench.

Stages talk through files in a directory so each one can be rerun alone:

    simulate  -> config.txt truth_<lane>.csv observations_<lane>.{txt,csv} [frames/]
    detect    -> config.txt candidates.csv observations_<lane>.{txt,csv} [edges/]
    track     -> config.txt track_kf_<lane>.csv track_pf_<lane>_seed<s>.csv [trace_*]
    evaluate  -> report.csv report.txt errors_<tracker>_<lane>[_seed<s>].csv
    bench     -> bench.csv

Exit codes: 0 ok, 1 usage or config error, 2 IO error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import config as C
from .detection import detect
from .dynamics import propagate, sample_process_noise
from .evaluation import TrackRecord, compare, error_series_csv, mse, report_csv, report_table
from .kalman import SingularInnovation, initial_belief, kf_step
from .observation import ObservationSet, build_observation, format_records, log_likelihood, parse_records, partition
from .particle import WeightCollapse, effective_sample_size, estimate, frame_rng, pf_init, pf_step, resample
from .pnm import PNMError, read_pnm, write_pgm, write_ppm
from .simulator import emit_candidates, observations_from_candidates, render_frames, simulate_trajectory

log = logging.getLogger("lanetrack")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
STATE_COLUMNS = "rho,v_rho,theta,v_theta"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- file helpers -------------------------------------------------------------


def _write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _states_csv(states) -> str:
    lines = [f"frame,{STATE_COLUMNS}"]
    for t, s in enumerate(states):
        lines.append(f"{t}," + ",".join(repr(float(v)) for v in s))
    return "\n".join(lines) + "\n"


def _read_states_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    try:
        return np.array([[float(r[k]) for k in STATE_COLUMNS.split(",")] for r in rows]).reshape(-1, 4)
    except (KeyError, ValueError) as e:
        raise UsageError(f"{path}: malformed state CSV ({e})") from None


def _observations_csv(sets) -> str:
    lines = ["frame,k,rho,theta,weight"]
    for s in sets:
        for k, m in enumerate(s.modes):
            lines.append(f"{s.frame_index},{k},{m.line.rho!r},{m.line.theta!r},{m.weight!r}")
    return "\n".join(lines) + "\n"


def _write_observations(out: Path, per_side: dict):
    for side, sets in per_side.items():
        _write(out / f"observations_{side}.txt", format_records(sets))
        _write(out / f"observations_{side}.csv", _observations_csv(sets))


def _settings(args, base: Path | None = None) -> C.Settings:
    files = []
    if base is not None and (base / "config.txt").exists():
        files.append(base / "config.txt")
    files += args.config or []
    for f in files:
        if not Path(f).exists():
            raise FileNotFoundError(f"config file not found: {f}")
    s = C.load_settings(args.preset, files, args.set or [])
    if args.seed is not None:
        s.apply([C.parse_override(f"seed={args.seed}")])
    return s


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands --------------------------------------------------------------


def run_simulate(args) -> int:
    s = _settings(args)
    scen = C.scenario_config(s)
    obs_cfg = C.observation_config(s)
    out = _outdir(args)
    _write(out / "config.txt", s.dump())
    truth = simulate_trajectory(scen)
    for side, xs in truth.lanes.items():
        _write(out / f"truth_{side}.csv", _states_csv(xs))
    limits = [(n, lim) for n, lim in scen.side_limits if n in truth.lanes]
    per_side = observations_from_candidates(emit_candidates(truth, scen), scen.geometry, obs_cfg, limits)
    _write_observations(out, per_side)
    n_img = 0
    if args.frames:
        fdir = out / "frames"
        fdir.mkdir(exist_ok=True)
        for t, img in enumerate(render_frames(truth, scen)):
            write_ppm(fdir / f"frame_{t:05d}.ppm", img)
            n_img += 1
    print(f"simulate: scenario {scen.name} seed {scen.seed}: {scen.n_frames} frames, lanes {','.join(truth.lanes)}, {n_img} images -> {out}")
    return EXIT_OK


_FRAME_RE = re.compile(r".*\.(ppm|pgm|pnm)$", re.IGNORECASE)


def _frame_paths(d: Path) -> list[Path]:
    if not d.is_dir():
        raise FileNotFoundError(f"frame directory not found: {d}")
    paths = sorted(p for p in d.iterdir() if _FRAME_RE.match(p.name))
    if not paths:
        raise FileNotFoundError(f"no PPM/PGM frames in {d}")
    return paths


def _as_rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img[..., None], 3, axis=2) if img.ndim == 2 else img


def run_detect(args) -> int:
    s = _settings(args)
    dcfg = C.detection_config(s)
    geom = C.geometry(s)
    obs_cfg = C.observation_config(s)
    limits = dict(C.side_limits(s))
    paths = _frame_paths(Path(args.frames))
    out = _outdir(args)
    _write(out / "config.txt", s.dump())
    if args.debug:
        (out / "edges").mkdir(exist_ok=True)
    per_side = {name: [] for name in limits}
    rows = ["frame,k,rho,theta,score"]
    for t, p in enumerate(paths):
        dbg = {} if args.debug else None
        cands = detect(_as_rgb(read_pnm(p)), dcfg, dbg)
        for k, c in enumerate(cands):
            rows.append(f"{t},{k},{c.line.rho!r},{c.line.theta!r},{c.score}")
        parts = partition(cands, limits)
        for name in limits:
            per_side[name].append(build_observation(parts[name], geom, obs_cfg, t))
        if dbg is not None:
            write_pgm(out / "edges" / f"edges_{t:05d}.pgm", dbg["edges"].astype(float))
    _write(out / "candidates.csv", "\n".join(rows) + "\n")
    _write_observations(out, per_side)
    print(f"detect: {len(paths)} frames, {len(rows) - 1} candidates -> {out}")
    return EXIT_OK


def _load_observations(d: Path) -> dict[str, list[ObservationSet]]:
    files = sorted(d.glob("observations_*.txt"))
    if not files:
        raise FileNotFoundError(f"no observations_<lane>.txt in {d}")
    out = {}
    for f in files:
        side = f.stem[len("observations_") :]
        try:
            out[side] = parse_records(f.read_text())
        except ValueError as e:
            raise UsageError(f"{f}: {e}") from None
    return out


def _track_kf(obs, kcfg, trace_rows):
    states, belief = [], None
    for o in obs:
        if belief is None:
            if o.K == 0:
                states.append(initial_belief(None).mean)
                continue
            belief = initial_belief(o.modes[0].line, np.diag(kcfg.init_cov))
        else:
            belief = kf_step(belief, o, kcfg)
        states.append(belief.mean)
        if trace_rows is not None:
            trace_rows.append(f"{o.frame_index}," + ",".join(repr(float(v)) for v in [*belief.mean, *belief.cov.ravel()]))
    return states


def _track_pf(obs, pcfg, trace_rows):
    states, ps, collapses = [], None, 0
    for o in obs:
        ps = pf_init(o, pcfg) if ps is None else pf_step(ps, o, pcfg)
        collapses += ps.collapsed
        states.append(estimate(ps).as_array())
        if trace_rows is not None:
            for i, (x, w) in enumerate(zip(ps.states, ps.weights)):
                trace_rows.append(f"{ps.frame_index},{i}," + ",".join(repr(float(v)) for v in x) + f",{float(w)!r}")
    return states, collapses


def run_track(args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise FileNotFoundError(f"input directory not found: {src}")
    s = _settings(args, base=src)
    per_side = _load_observations(src)
    out = _outdir(args)
    _write(out / "config.txt", s.dump())
    base_seed = s.get("seed", 0)
    seeds = [base_seed + i for i in range(args.seeds)]
    written = 0
    for side, obs in per_side.items():
        if args.tracker in ("kf", "both"):
            rows = [f"frame,{STATE_COLUMNS}," + ",".join(f"p{i}{j}" for i in range(4) for j in range(4))] if args.trace else None
            _write(out / f"track_kf_{side}.csv", _states_csv(_track_kf(obs, C.kalman_config(s), rows)))
            written += 1
            if rows is not None:
                _write(out / f"trace_kf_{side}.csv", "\n".join(rows) + "\n")
        if args.tracker in ("pf", "both"):
            for seed in seeds:
                pcfg = C.particle_config(s, seed=seed, n_particles=args.particles)
                rows = [f"frame,i,{STATE_COLUMNS},weight"] if args.trace else None
                states, collapses = _track_pf(obs, pcfg, rows)
                _write(out / f"track_pf_{side}_seed{seed}.csv", _states_csv(states))
                written += 1
                if rows is not None:
                    _write(out / f"trace_pf_{side}_seed{seed}.csv", "\n".join(rows) + "\n")
                if collapses:
                    print(f"track: pf {side} seed {seed}: {collapses} frames with weight collapse")
    print(f"track: {args.tracker} on lanes {','.join(per_side)}, {written} track files -> {out}")
    return EXIT_OK


_TRACK_RE = re.compile(r"track_(kf|pf)_(.+?)(?:_seed(\d+))?\.csv$")


def run_evaluate(args) -> int:
    src = Path(args.input)
    truth_dir = Path(args.truth) if args.truth else src
    for d in (src, truth_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    s = _settings(args, base=truth_dir)
    scenario = s.get("name", "custom")
    out = _outdir(args)
    reports = []
    for f in sorted(src.glob("track_*.csv")):
        m = _TRACK_RE.match(f.name)
        if not m:
            continue
        tracker, side, seed = m.group(1).upper(), m.group(2), m.group(3)
        truth_path = truth_dir / f"truth_{side}.csv"
        if not truth_path.exists():
            raise FileNotFoundError(f"missing ground truth {truth_path}")
        rec = TrackRecord(_read_states_csv(f), tracker, scenario, side, None if seed is None else int(seed))
        rep = mse(rec, _read_states_csv(truth_path))
        reports.append(rep)
        suffix = "" if seed is None else f"_seed{seed}"
        _write(out / f"errors_{tracker.lower()}_{side}{suffix}.csv", error_series_csv(rep))
    if not reports:
        raise FileNotFoundError(f"no track_*.csv files in {src}")
    rows = compare(reports)
    _write(out / "report.csv", report_csv(rows))
    table = report_table(rows)
    _write(out / "report.txt", table)
    print(table, end="")
    return EXIT_OK


def _median_ms(xs) -> float:
    return 1e3 * statistics.median(xs) if xs else float("nan")


def run_bench(args) -> int:
    s = _settings(args)
    scen = C.scenario_config(s)
    pcfg = C.particle_config(s, seed=s.get("seed", 0), n_particles=args.particles)
    truth = simulate_trajectory(scen)
    limits = [(n, lim) for n, lim in scen.side_limits if n in truth.lanes]
    per_side = observations_from_candidates(emit_candidates(truth, scen), scen.geometry, pcfg.obs_cfg, limits)
    times = {"propagate": [], "likelihood": [], "resample": [], "step": []}
    for obs in per_side.values():
        ps = pf_init(obs[0], pcfg)
        for o in obs[1:]:
            rng = frame_rng(pcfg.rng_seed, o.frame_index)
            t0 = time.perf_counter()
            x = propagate(ps.states, pcfg.dynamics, sample_process_noise(pcfg.dynamics, rng, size=ps.n))
            t1 = time.perf_counter()
            log_likelihood(x, o, pcfg.obs_cfg)
            t2 = time.perf_counter()
            effective_sample_size(ps)
            resample(ps, rng)
            t3 = time.perf_counter()
            ps = pf_step(ps, o, pcfg)
            t4 = time.perf_counter()
            times["propagate"].append(t1 - t0)
            times["likelihood"].append(t2 - t1)
            times["resample"].append(t3 - t2)
            times["step"].append(t4 - t3)
    if args.frames:
        dcfg = C.detection_config(s)
        times["detect"] = []
        for p in _frame_paths(Path(args.frames)):
            img = _as_rgb(read_pnm(p))
            t0 = time.perf_counter()
            detect(img, dcfg)
            times["detect"].append(time.perf_counter() - t0)
    lines = ["stage,median_ms,n"]
    for stage, xs in times.items():
        lines.append(f"{stage},{_median_ms(xs):.6f},{len(xs)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(_outdir(args) / "bench.csv", text)
    print(f"bench: pf N_s={pcfg.n_particles} on scenario {scen.name}")
    print(text, end="")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--preset", choices=C.PRESETS, help="built-in scenario preset (lowest config layer)")
    p.add_argument("--config", action="append", metavar="PATH", help="key = value config file (repeatable)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable, applied last)")
    p.add_argument("--seed", type=int, help="scenario / particle filter seed (overrides config 'seed')")
    p.add_argument("--out", required=out_required, metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lanetrack", description="Lane tracking with Kalman and particle filters.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic scenario with ground truth")
    _common(p)
    p.add_argument("--frames", action="store_true", help="also render PPM frames")
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("detect", help="detect lane lines in a directory of PPM/PGM frames")
    _common(p)
    p.add_argument("--frames", required=True, metavar="DIR", help="directory of frames, processed in name order")
    p.add_argument("--debug", action="store_true", help="write binary edge maps as PGM")
    p.set_defaults(func=run_detect)

    p = sub.add_parser("track", help="run the trackers on observation records")
    _common(p)
    p.add_argument("--in", dest="input", required=True, metavar="DIR", help="directory with observations_<lane>.txt")
    p.add_argument("--tracker", choices=("kf", "pf", "both"), default="both", help="which filter(s) to run")
    p.add_argument("--particles", type=int, metavar="N", help="particle count (overrides pf.n_particles)")
    p.add_argument("--seeds", type=int, default=1, metavar="N", help="run the particle filter for N consecutive seeds")
    p.add_argument("--trace", action="store_true", help="dump KF beliefs and PF particle clouds")
    p.set_defaults(func=run_track)

    p = sub.add_parser("evaluate", help="score track files against ground truth")
    _common(p)
    p.add_argument("--in", dest="input", required=True, metavar="DIR", help="directory with track_*.csv")
    p.add_argument("--truth", metavar="DIR", help="directory with truth_<lane>.csv (default: --in)")
    p.set_defaults(func=run_evaluate)

    p = sub.add_parser("bench", help="time the particle filter stages per frame")
    _common(p, out_required=False)
    p.add_argument("--particles", type=int, metavar="N", help="particle count (overrides pf.n_particles)")
    p.add_argument("--frames", metavar="DIR", help="also time detection on these frames")
    p.set_defaults(func=run_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "particles", None) is not None and args.particles < 2:
        parser.error("--particles must be >= 2")
    if getattr(args, "seeds", 1) < 1:
        parser.error("--seeds must be >= 1")
    try:
        return args.func(args)
    except (C.ConfigError, UsageError) as e:
        print(f"lanetrack: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PNMError) as e:
        print(f"lanetrack: IO error: {e}", file=sys.stderr)
        return EXIT_IO
    except (SingularInnovation, WeightCollapse, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"lanetrack: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"lanetrack: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
