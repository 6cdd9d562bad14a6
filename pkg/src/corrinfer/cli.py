"""Command-line experiment runner.

Every run writes a results CSV and a manifest JSON into the output
directory.  Exit status: 0 success, 2 configuration error, 3 fatal solver
non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, RunConfig, build_config, preset_names, read_config, resolved
from .ffunc import SaddleDomainError, evaluate_F
from .spectrum import KINDS as SPECTRUM_KINDS, SpectrumError, SpectrumModel, make_spectrum
from .patterns import GeneratorSpec, generate
from .replica import NoSignChange, ReplicaError, locate_transitions, scan, solve_rs
from .tap import TAPError, tap_free_energy, tap_residual, tap_solve

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3

REPLICA_COLUMNS = ["alpha", "chi_w", "q_w", "m_w", "chi_u", "q_u", "m_u", "free_energy", "entropy",
                   "at_margin", "kl", "mutual_info", "iterations", "residual", "converged",
                   "rs_unstable"]
TAP_COLUMNS = ["alpha", "sample", "N", "p", "converged", "status", "iterations", "delta",
               "residual", "chi_w", "chi_u", "chi_w_hat", "chi_u_hat", "free_energy", "entropy",
               "rs_unstable"]
FFUNC_COLUMNS = ["alpha", "x", "y", "value", "lambda_x", "lambda_y", "dF_dx", "dF_dy",
                 "residual", "status"]
FIGURE_COLUMNS = ["series", "alpha", "entropy", "stderr", "n_samples", "n_converged",
                  "converged", "rs_unstable"]


class NonConvergence(RuntimeError):
    pass


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    path.write_text(buf.getvalue())
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n")
    return path


# ------------------------------------------------------------- experiments

def _replica_kw(cfg: RunConfig) -> dict:
    return {"damping": cfg.solver.damping, "tol": cfg.solver.tol, "max_iter": cfg.solver.max_iter}


def replica_rows(cfg: RunConfig, alphas) -> list[dict]:
    try:
        sols = scan(alphas, cfg.spectrum, cfg.generative, cfg.recognition,
                    mutual_info=cfg.mutual_info, kl=cfg.kl, **_replica_kw(cfg))
    except (ReplicaError, SaddleDomainError) as exc:
        raise NonConvergence(str(exc)) from exc
    return [s.row() for s in sols]


def _tap_sample(args):
    """One TAP instance; module-level so it can run in a worker process."""
    cfg_tap, alpha, k, seed, recognition, generative = args
    N = cfg_tap.N
    p = int(round(alpha * N))
    gspec = GeneratorSpec(kind=cfg_tap.patterns, N=N, p=p, label_mode=cfg_tap.label_mode,
                          teacher_prior=generative[0], teacher_channel=generative[1],
                          seed=seed, sample=k)
    inst = generate(gspec, recognition)
    st, ok = tap_solve(inst, damping=cfg_tap.damping, max_iter=cfg_tap.max_iter,
                       tol=cfg_tap.tol, seed=seed)
    row = {"alpha": alpha, "sample": k, "N": N, "p": p, "converged": ok, "status": st.status,
           "iterations": st.iteration, "delta": st.delta,
           "residual": tap_residual(inst, st), "chi_w": st.chi_w, "chi_u": st.chi_u,
           "chi_w_hat": st.chi_w_hat, "chi_u_hat": st.chi_u_hat,
           "free_energy": float("nan"), "entropy": float("nan")}
    if ok:
        try:
            row["free_energy"], row["entropy"] = (float(v) for v in tap_free_energy(inst, st, cfg_tap.tol))
        except TAPError:
            row["converged"] = False
            row["status"] = "not_stationary"
    return row


def _rs_flags(cfg: RunConfig, alphas) -> dict[float, bool | None]:
    """AT instability flag of the replica solution at each alpha (None if unavailable)."""
    flags = {}
    prev = None
    for a in alphas:
        try:
            sol = solve_rs(cfg.spectrum(a), cfg.generative, cfg.recognition,
                           init=prev.params if prev else None, **_replica_kw(cfg))
            flags[a], prev = sol.rs_unstable, sol
        except (ReplicaError, SaddleDomainError):
            flags[a] = None
    return flags


def tap_rows(cfg: RunConfig) -> list[dict]:
    tasks = [(cfg.tap, a, k, cfg.seed, cfg.recognition, cfg.generative)
             for a in cfg.tap.alphas for k in range(cfg.tap.samples)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_tap_sample, tasks))
    else:
        rows = [_tap_sample(t) for t in tasks]
    flags = _rs_flags(cfg, cfg.tap.alphas)
    for r in rows:
        r["rs_unstable"] = flags[r["alpha"]]
    rows.sort(key=lambda r: (r["alpha"], r["sample"]))
    return rows


def tap_summary(rows: list[dict]) -> list[dict]:
    """Per-alpha mean and standard error of the entropy over converged samples."""
    out = []
    for a in sorted({r["alpha"] for r in rows}):
        sub = [r for r in rows if r["alpha"] == a]
        ent = np.array([r["entropy"] for r in sub if r["converged"]])
        n = len(ent)
        out.append({
            "series": "tap", "alpha": a,
            "entropy": float(ent.mean()) if n else float("nan"),
            "stderr": float(ent.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
            "n_samples": len(sub), "n_converged": n,
            "converged": n > len(sub) / 2, "rs_unstable": sub[0]["rs_unstable"],
        })
    return out


def ffunc_rows(cfg: RunConfig) -> list[dict]:
    rows = []
    for a in cfg.alphas:
        sp = cfg.spectrum(a)
        for x in cfg.ffunc_x:
            for y in cfg.ffunc_y:
                row = {"alpha": a, "x": x, "y": y}
                try:
                    fe = evaluate_F(sp, x, y)
                    row.update({k: getattr(fe, k) for k in
                                ("value", "lambda_x", "lambda_y", "dF_dx", "dF_dy", "residual")})
                    row["status"] = "ok"
                except SaddleDomainError:
                    row["status"] = "saddle_domain"
                rows.append(row)
    return rows


def run(cfg: RunConfig, out: Path) -> tuple[int, list[Path], dict]:
    """Run one experiment; returns (exit status, written files, summary)."""
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    summary: dict = {}
    exp = cfg.experiment
    try:
        if exp == "replica-scan":
            rows = replica_rows(cfg, cfg.alphas)
            files.append(write_csv(out / "replica_scan.csv", REPLICA_COLUMNS, rows))
        elif exp == "tap-run":
            rows = tap_rows(cfg)
            files.append(write_csv(out / "tap_run.csv", TAP_COLUMNS, rows))
            summary["tap"] = tap_summary(rows)
        elif exp == "ffunc-eval":
            files.append(write_csv(out / "ffunc_eval.csv", FFUNC_COLUMNS, ffunc_rows(cfg)))
        elif exp == "oracle-check":
            from .oracle import run_suite
            report = run_suite(cfg.seed)
            files.append(write_json(out / "oracle_report.json", report))
            summary["passed"] = report["passed"]
        elif exp == "locate-capacity":
            summary.update(locate(cfg))
            files.append(write_csv(out / "capacity.csv", ["quantity", "alpha"],
                                   [{"quantity": k, "alpha": v} for k, v in summary.items()]))
        elif exp == "figure1":
            files.extend(figure1(cfg, out, summary))
    except NonConvergence as exc:
        summary["error"] = str(exc)
        return EXIT_NONCONVERGED, files, summary
    return EXIT_OK, files, summary


def locate(cfg: RunConfig) -> dict:
    lo, hi = cfg.alphas[0], cfg.alphas[-1]
    step = cfg.alphas[1] - cfg.alphas[0] if len(cfg.alphas) > 1 else 0.05
    result = {}
    for name in ("capacity", "at"):
        try:
            val = locate_transitions(cfg.spectrum, cfg.generative, cfg.recognition,
                                     alpha_min=lo, alpha_max=hi, step=step, xtol=1e-4,
                                     which=(name,), **_replica_kw(cfg))
            result["alpha_c" if name == "capacity" else "alpha_AT"] = val[0 if name == "capacity" else 1]
        except NoSignChange:
            result["alpha_c" if name == "capacity" else "alpha_AT"] = None
        except (ReplicaError, SaddleDomainError) as exc:
            raise NonConvergence(str(exc)) from exc
    return result


def figure1(cfg: RunConfig, out: Path, summary: dict) -> list[Path]:
    rep = replica_rows(cfg, cfg.alphas)
    samples = tap_rows(cfg)
    tap = tap_summary(samples)
    rows = [{"series": "replica", "alpha": r["alpha"], "entropy": r["entropy"],
             "stderr": 0.0, "n_samples": 0, "n_converged": 0,
             "converged": r["converged"], "rs_unstable": r["rs_unstable"]} for r in rep]
    rows += tap
    files = [write_csv(out / "figure1.csv", FIGURE_COLUMNS, rows),
             write_csv(out / "figure1_tap_samples.csv", TAP_COLUMNS, samples)]
    if cfg.plot:
        from .plotting import entropy_figure
        files.append(entropy_figure(rep, tap, out / "figure1.png",
                                    title=f"N = {cfg.tap.N}, {cfg.tap.samples} samples per point"))
    summary["tap"] = tap
    return files


# ----------------------------------------------------------------- entry

def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="corrinfer", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=name != "ffunc-eval",
                       help=f"TOML file or preset name ({', '.join(preset_names())})")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int, help="TAP instances per alpha")
        p.add_argument("--jobs", type=int, help="worker processes for independent samples")
        p.add_argument("--damping", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--no-plot", dest="plot", action="store_false", default=None,
                       help="skip the PNG rendering in figure1 mode")
        if name == "ffunc-eval":
            p.add_argument("--spectrum", help="spectrum JSON file or kind "
                           f"({', '.join(k for k in SPECTRUM_KINDS if k != 'empirical')}); "
                           "prints one JSON record instead of running a grid")
            p.add_argument("--alpha", type=float, help="alpha for a spectrum given by kind")
            p.add_argument("--x", type=float)
            p.add_argument("--y", type=float)
    return ap


def _single_spectrum(source: str, alpha: float | None) -> SpectrumModel:
    path = Path(source)
    if path.is_file():
        try:
            return SpectrumModel.from_json(path.read_text())
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if source not in SPECTRUM_KINDS or source == "empirical":
        raise ConfigError(f"no spectrum file or kind named {source!r}")
    if alpha is None:
        raise ConfigError(f"spectrum kind {source!r} needs --alpha")
    try:
        return make_spectrum(source, alpha)
    except SpectrumError as exc:
        raise ConfigError(str(exc)) from exc


def ffunc_single(args) -> int:
    """Evaluate F at one point and print the record as JSON on stdout."""
    try:
        if args.x is None or args.y is None:
            raise ConfigError("--spectrum mode needs --x and --y")
        spec = _single_spectrum(args.spectrum, args.alpha)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        record = evaluate_F(spec, args.x, args.y).as_dict()
    except (SaddleDomainError, ValueError) as exc:
        print(json.dumps({"x": args.x, "y": args.y, "error": str(exc)}))
        return EXIT_NONCONVERGED
    print(json.dumps({"alpha": spec.alpha, **record}, default=_json_default))
    return EXIT_OK


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    if args.command == "ffunc-eval" and args.spectrum is not None:
        return ffunc_single(args)
    if args.config is None:
        print("config error: --config is required (or --spectrum with ffunc-eval)", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.time()
    cli = {k: getattr(args, k) for k in ("out", "seed", "samples", "jobs", "damping", "tol",
                                         "max_iter", "plot")}
    try:
        doc = read_config(args.config)
        doc["experiment"] = args.command
        cfg = build_config(doc, {"cli": cli})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    status, files, summary = run(cfg, out)
    manifest = {
        "command": args.command, "config_source": str(args.config), "config": resolved(cfg),
        "version": __version__, "python": platform.python_version(),
        "numpy": np.__version__, "seed": cfg.seed, "exit_status": status,
        "outputs": [f.name for f in files], "summary": summary,
        "wall_time_s": round(time.time() - t0, 3),
    }
    write_json(out / "manifest.json", manifest)
    for f in files:
        print(f)
    if status == EXIT_NONCONVERGED:
        print(f"solver did not converge: {summary.get('error')}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
