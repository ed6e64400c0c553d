"""Headless experiment runner, metrics reporter, and server launcher.

Exit codes: 0 ok, 1 runtime failure, 2 input/usage failure. Runs are
reproducible: with a scripted policy, the same flags and seed produce a
byte-identical session log (the clock is simulated).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .advisor import AdvisorEndpointConfig, AdvisorPolicy, AdvisorUnavailableError
from .domain import Fidelity
from .session import (
    ConfigError,
    Mode,
    SessionConfig,
    SessionLogError,
    SessionState,
    create_session,
    load,
)
from .testbed import app_by_id, load_apps

OBJECTIVE_REQUESTS = (
    "Please propose parameters that increase Objective 1",
    "Please propose parameters that increase Objective 2",
)

METRIC_COLUMNS = (
    "relative_hypervolume",
    "formal_count",
    "pareto_count",
    "design_space_count",
    "total_travel_distance",
    "mean_travel_distance",
)


class SimulatedClock:
    """Deterministic wall clock for reproducible logs."""

    def __init__(self, start: float = 0.0, tick: float = 1.0):
        self.now = start
        self.tick = tick

    def __call__(self) -> float:
        self.now += self.tick
        return self.now


def _endpoint_from_args(args) -> AdvisorEndpointConfig | None:
    if not getattr(args, "advisor_url", None):
        return None
    return AdvisorEndpointConfig(
        base_url=args.advisor_url,
        model_name=args.advisor_model or "",
        api_key_env_var=args.advisor_key_env,
    )


def _session_config(args, mode: Mode, policy: AdvisorPolicy) -> SessionConfig:
    return SessionConfig(
        app_id=args.app,
        mode=mode,
        q=args.q,
        n_seed=args.n_seed,
        proposal_lockout=args.n_seed,
        rng_seed=args.seed,
        advisor_policy=policy,
        endpoint=_endpoint_from_args(args),
    ).test_profile()


def _evaluate_seeds(state: SessionState) -> None:
    while state.pending_seeds:
        state.submit_evaluation(state.pending_seeds[0], Fidelity.FORMAL)


def _metrics_row(state: SessionState) -> dict:
    return metrics_mod.session_metrics(state.history, state.app, state.reference_point)


def _print_metrics_table(rows: list[tuple[str, dict]], stream=None) -> None:
    stream = stream if stream is not None else sys.stdout
    print("session\t" + "\t".join(METRIC_COLUMNS), file=stream)
    for name, row in rows:
        cells = [name] + [
            f"{row[c]:.6f}" if isinstance(row[c], float) else str(row[c])
            for c in METRIC_COLUMNS
        ]
        print("\t".join(cells), file=stream)


def _run_session(
    config: SessionConfig,
    iterations: int,
    requests: list[str],
    log_path: Path | None,
    extra_apps=None,
) -> SessionState:
    state = create_session(
        config, clock=SimulatedClock(), log_path=log_path, extra_apps=extra_apps
    )
    _evaluate_seeds(state)
    for i in range(iterations):
        request = requests[i % len(requests)] if requests else ""
        candidate, _decision = state.propose(request)
        state.submit_evaluation(candidate.point, Fidelity.FORMAL)
    return state


def cmd_run(args) -> int:
    mode = Mode(args.mode)
    extra_apps = load_apps(args.apps_file) if args.apps_file else None
    if mode is Mode.DESIGNER_LED and not args.script:
        print(
            "run: designer_led sessions have nothing to automate; provide "
            "--script with points to evaluate",
            file=sys.stderr,
        )
        return 2
    policy = AdvisorPolicy(args.policy)
    config = _session_config(args, mode, policy)
    requests = []
    if args.requests:
        requests = [ln for ln in Path(args.requests).read_text().splitlines()]
    log_path = Path(args.out) if args.out else None
    if mode is Mode.DESIGNER_LED:
        state = create_session(
            config, clock=SimulatedClock(), log_path=log_path, extra_apps=extra_apps
        )
        _evaluate_seeds(state)
        for line in Path(args.script).read_text().splitlines():
            if not line.strip():
                continue
            state.submit_evaluation(np.asarray(json.loads(line), dtype=float), Fidelity.FORMAL)
    else:
        state = _run_session(config, args.iterations, requests, log_path, extra_apps)
    _print_metrics_table([(args.out or "-", _metrics_row(state))])
    return 0


def cmd_tech_eval(args) -> int:
    apps = args.apps or ["app1", "app2", "app3"]
    policy = AdvisorPolicy(args.policy)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    requests = list(OBJECTIVE_REQUESTS)
    if args.null_control:
        requests = [OBJECTIVE_REQUESTS[0], OBJECTIVE_REQUESTS[0]]
    scatter_lines = ["app,repetition,iteration,request_group,objective_1,objective_2"]
    summary = {}
    for app_id in apps:
        separations = []
        for rep in range(args.repetitions):
            ns = argparse.Namespace(**{**vars(args), "app": app_id, "seed": args.seed + rep})
            config = _session_config(ns, Mode.COOPERATIVE, policy)
            state = _run_session(config, args.iterations, requests, None)
            groups: dict[int, list[np.ndarray]] = {0: [], 1: []}
            post_seed = state.formal_history[config.n_seed:]
            for i, obs in enumerate(post_seed):
                group = i % 2
                groups[group].append(obs.point)
                scatter_lines.append(
                    f"{app_id},{rep},{i + 1},{group + 1},"
                    f"{obs.objectives[0]:.6f},{obs.objectives[1]:.6f}"
                )
            separations.append(
                metrics_mod.centroid_separation(groups[0], groups[1])
            )
        mean, sd = float(np.mean(separations)), float(np.std(separations))
        summary[app_id] = (mean, sd, separations)
        print(f"{app_id}\tcentroid_separation\t{mean:.4f} +- {sd:.4f}")
    if out_dir:
        (out_dir / "tech_eval_scatter.csv").write_text("\n".join(scatter_lines) + "\n")
        (out_dir / "tech_eval_summary.json").write_text(
            json.dumps(
                {k: {"mean": v[0], "sd": v[1], "separations": v[2]} for k, v in summary.items()},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return 0


def cmd_metrics(args) -> int:
    rows = []
    for path in args.logs:
        try:
            state = load(path)
        except SessionLogError as exc:
            print(f"metrics: {path}: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"metrics: {path}: {exc}", file=sys.stderr)
            return 2
        rows.append((str(path), _metrics_row(state)))
    _print_metrics_table(rows)
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(host=args.host, port=args.port, test_profile=args.profile == "test")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steerbo")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--app", default="app1")
        p.add_argument("--q", type=int, default=8)
        p.add_argument("--n-seed", type=int, default=5)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--policy", default="scripted",
                       choices=[p.value for p in AdvisorPolicy])
        p.add_argument("--advisor-url", default=None)
        p.add_argument("--advisor-model", default=None)
        p.add_argument("--advisor-key-env", default="STEERBO_ADVISOR_API_KEY")
        p.add_argument("--apps-file", default=None,
                       help="JSON file with additional task definitions")

    run = sub.add_parser("run", help="seed + N automated proposal/evaluation iterations")
    common(run)
    run.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    run.add_argument("--iterations", type=int, default=25)
    run.add_argument("--requests", default=None,
                     help="file with one request per line, cycled per iteration")
    run.add_argument("--script", default=None,
                     help="designer_led only: file of normalized points (JSON array per line)")
    run.add_argument("--out", default=None, help="session log path")
    run.set_defaults(func=cmd_run)

    tech = sub.add_parser("tech-eval", help="alternating-request steering experiment")
    common(tech)
    tech.add_argument("--apps", nargs="*", default=None)
    tech.add_argument("--iterations", type=int, default=15)
    tech.add_argument("--repetitions", type=int, default=5)
    tech.add_argument("--null-control", action="store_true",
                      help="use the same request for both groups")
    tech.add_argument("--out-dir", default=None)
    tech.set_defaults(func=cmd_tech_eval)

    met = sub.add_parser("metrics", help="six-metric row per session log")
    met.add_argument("logs", nargs="+")
    met.set_defaults(func=cmd_metrics)

    srv = sub.add_parser("serve", help="run the HTTP steering service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8711)
    srv.add_argument("--profile", default="paper", choices=["paper", "test"])
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"steerbo: {exc}", file=sys.stderr)
        return 2
    except AdvisorUnavailableError as exc:
        print(f"steerbo: advisor failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"steerbo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
