"""Command-line front end.

Exit codes: 0 success (all runs converged), 1 config error, 2 a run hit its
max duration without converging.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, LoadedConfig, load_experiment
from .sim import DegenerateLine, ExperimentConfig, deviation_metrics, run, with_perturbation
from .stability import compute_workspaces, worker_count

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2

GROUPS = [
    ("A", "classic", "none"),
    ("B", "tracking", "none"),
    ("C", "classic", "v1"),
    ("D", "tracking", "v1"),
    ("E", "classic", "v2"),
    ("F", "tracking", "v2"),
]


@dataclass(frozen=True)
class RunSummary:
    config_id: str
    controller: str
    perturbation: str
    seed: int
    converged: bool
    iterations: int
    image_max: float  # px
    image_mean: float
    space_max: float  # m
    space_mean: float
    final_error: float
    note: str = ""

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        return [repr(v) if isinstance(v, float) else str(v) for v in astuple(self)]


def summarize(log, config: ExperimentConfig, note: str = "") -> RunSummary:
    try:
        m = deviation_metrics(log)
        metrics = (m.image_max, m.image_mean, m.space_max, m.space_mean)
    except (DegenerateLine, ValueError) as exc:
        metrics = (math.nan,) * 4
        note = note or str(exc)
    s, s_star = log.features[-1], log.columns([f"sstar{i}" for i in range(6)])[-1]
    return RunSummary(
        config_id=config.name,
        controller=config.controller,
        perturbation=config.perturbation_name,
        seed=config.seed,
        converged=log.converged,
        iterations=len(log.rows),
        image_max=metrics[0],
        image_mean=metrics[1],
        space_max=metrics[2],
        space_mean=metrics[3],
        final_error=float(np.linalg.norm(s - s_star)),
        note=note,
    )


def failed_summary(config: ExperimentConfig, exc: Exception) -> RunSummary:
    nan = math.nan
    return RunSummary(config.name, config.controller, config.perturbation_name, config.seed,
                      False, 0, nan, nan, nan, nan, nan, f"{type(exc).__name__}: {exc}")


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _reseed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    if config.perturbation_name == "custom":
        return replace(config, seed=seed)
    return with_perturbation(config, config.perturbation_name, seed)


def run_pair(config: ExperimentConfig):
    """Classic run, then tracking with the horizon set to the classic duration."""
    classic = replace(config, controller="classic", t_full=None)
    log_c = run(classic)
    tracking = replace(config, controller="tracking", t_full=float(log_c.t[-1]), velocity=None)
    log_t = run(tracking)
    return (classic, log_c), (tracking, log_t)


def _stem(config: ExperimentConfig) -> str:
    return f"{config.name}_{config.controller}_{config.perturbation_name}_s{config.seed}"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_run(loaded: LoadedConfig, out_dir: Path) -> int:
    config = loaded.experiment
    runs = []
    if config.controller == "tracking" and loaded.match_classic:
        runs.extend(run_pair(config))
    else:
        runs.append((config, run(config)))
    summaries = []
    for cfg, log in runs:
        _write(out_dir / f"{_stem(cfg)}.csv", log.to_csv())
        summaries.append(summarize(log, cfg))
    text = _table(RunSummary.header(), [s.row() for s in summaries])
    _write(out_dir / f"{_stem(config)}_summary.csv", text)
    sys.stdout.write(text)
    if len(summaries) == 2:
        c, t = summaries
        sys.stdout.write(
            f"classic/tracking ratio: image {c.image_max / t.image_max:.3f} "
            f"space {c.space_max / t.space_max:.3f}\n"
        )
    return EXIT_OK if summaries[-1].converged else EXIT_NOT_CONVERGED


def _compare_job(args):
    base, pert, seed = args
    config = with_perturbation(base, pert, seed)
    try:
        (cc, lc), (ct, lt) = run_pair(config)
    except Exception as exc:  # flagged per cell; the table is still emitted
        c = replace(config, controller="classic")
        return [(failed_summary(c, exc), None), (failed_summary(replace(c, controller="tracking"),
                                                               exc), None)]
    return [(summarize(lc, cc), lc.to_csv()), (summarize(lt, ct), lt.to_csv())]


def compare(config: ExperimentConfig, reps: int, seed: int, workers: int = 1):
    """All six groups; summaries ordered by (perturbation, seed, controller)."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    jobs = [(config, pert, seed + r) for pert in ("none", "v1", "v2") for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_job, jobs))
    else:
        results = [_compare_job(j) for j in jobs]
    return [item for pair in results for item in pair]


def group_table(summaries) -> list[list[str]]:
    rows = []
    for label, controller, pert in GROUPS:
        sel = [s for s in summaries if s.controller == controller and s.perturbation == pert]
        ok = [s for s in sel if not math.isnan(s.image_max)]

        def avg(name):
            return repr(float(np.mean([getattr(s, name) for s in ok]))) if ok else "nan"

        def worst(name):
            return repr(float(np.max([getattr(s, name) for s in ok]))) if ok else "nan"

        rows.append([label, controller, pert, str(len(sel)),
                     str(sum(s.converged for s in sel)),
                     worst("image_max"), avg("image_max"), avg("image_mean"),
                     worst("space_max"), avg("space_max"), avg("space_mean")])
    return rows


GROUP_HEADER = ["group", "controller", "perturbation", "runs", "converged",
                "image_max_worst", "image_max_avg", "image_mean_avg",
                "space_max_worst", "space_max_avg", "space_mean_avg"]


def cmd_compare(loaded: LoadedConfig, out_dir: Path, reps: int) -> int:
    config = loaded.experiment
    results = compare(config, reps, config.seed, worker_count())
    for summary, text in results:
        if text is not None:
            cfg_like = f"{summary.config_id}_{summary.controller}_{summary.perturbation}"
            _write(out_dir / "logs" / f"{cfg_like}_s{summary.seed}.csv", text)
    summaries = [s for s, _ in results]
    _write(out_dir / "runs.csv", _table(RunSummary.header(), [s.row() for s in summaries]))
    groups = _table(GROUP_HEADER, group_table(summaries))
    _write(out_dir / "groups.csv", groups)
    sys.stdout.write(groups)
    return EXIT_OK if all(s.converged for s in summaries) else EXIT_NOT_CONVERGED


WORKSPACE_HEADER = ["x", "y", "z", "orientation", "sfw", "csw", "fc"]


def workspace_csv(grid, n_samples: int, n_boundary: int, seed: int) -> str:
    rows = [[repr(float(x)), repr(float(y)), repr(float(z)), str(j), str(int(a)), str(int(b)),
             str(int(c))] for x, y, z, j, a, b, c in grid.rows()]
    text = _table(WORKSPACE_HEADER, rows)
    return text + (f"# csw is approximate: monte carlo n_samples={n_samples} "
                   f"n_boundary={n_boundary} seed={seed}\n")


def cmd_workspace(loaded: LoadedConfig, out_dir: Path) -> int:
    config, ws = loaded.experiment, loaded.workspace
    grid = compute_workspaces(config.robot, ws.grid, ws.bounds, ws.n_samples, ws.n_boundary,
                              config.seed, config.desired_object_pose)
    _write(out_dir / f"{config.name}_workspace.csv",
           workspace_csv(grid, ws.n_samples, ws.n_boundary, config.seed))
    counts = grid.counts()
    sys.stdout.write(" ".join(f"{k}={v}" for k, v in counts.items()) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdprvs", description="Visual servoing of a cable-driven parallel robot.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("run", "run one experiment"),
                        ("compare", "classic vs tracking under none / V1 / V2"),
                        ("workspace", "SFW, CSW and FC on a grid")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out-dir", type=Path, default=Path("out"))
        if name == "compare":
            p.add_argument("--reps", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        loaded = load_experiment(args.config)
        if args.seed is not None:
            loaded = replace(loaded, experiment=_reseed(loaded.experiment, args.seed))
        if getattr(args, "reps", 1) < 1:
            raise ConfigError("--reps must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return cmd_run(loaded, args.out_dir)
    if args.command == "compare":
        return cmd_compare(loaded, args.out_dir, args.reps)
    return cmd_workspace(loaded, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
