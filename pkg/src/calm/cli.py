"""Command-line entry point.

Subcommands cover the full pipeline: ``gen`` writes a synthetic dataset,
``cluster`` fits mean trajectories, ``rollout`` runs the controller and
writes a CSV trace, ``eval`` scores a model against a dataset, ``serve``
starts the playground server.

Exit codes: 0 success, 1 validation error (bad flags, malformed or
missing files), 2 runtime error. Set the CALM_LOG environment variable
(DEBUG/INFO/WARNING/ERROR) to control logging on standard error.

Kernel and controller knobs share one override mechanism: a JSON config
file (``--config``) overlaid by repeatable ``--set key=value`` flags,
with dotted keys like ``kernel.sigma`` or ``controller.kv_perturbed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .clustering import FitConfig, fit
from .controller import ControllerConfig
from .datasets import DATASET_KINDS, generate_dataset
from .errors import CalmError, InvalidArgumentError, SchemaError
from .io import load_dataset, load_model, save_dataset, save_model
from .service import CLI_KERNEL_NAMES, build_app, kernel_from_name
from .sim import evaluate, load_perturbation_script, rollout, rollout_to_csv

__all__ = ["main"]

log = logging.getLogger(__name__)

_OVERRIDE_GROUPS = {
    "kernel": ("sigma", "delta", "epsilon", "backwards_literal"),
    "controller": (
        "kv_perturbed",
        "blend_sigma",
        "control_dt",
        "grad_floor",
        "switch_margin",
    ),
    "rollout": ("max_ticks", "convergence_tol"),
    "fit": ("n_mean_states", "temperature", "tol", "max_iters", "cov_floor", "k_max"),
    "serve": ("start",),
}


def _setup_logging() -> None:
    level_name = os.environ.get("CALM_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calm", description=__doc__.split("\n")[1])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p):
        p.add_argument("--config", help="JSON file with dotted override keys")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key, e.g. kernel.sigma=9",
        )

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True, choices=DATASET_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-demos", type=int, default=None)
    p.add_argument("--n-points", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--dt", type=float, default=0.05)

    p = sub.add_parser("cluster", help="fit mean trajectories to a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--k", type=int)
    group.add_argument("--auto", action="store_true", help="choose k by elbow rule")
    add_overrides(p)

    p = sub.add_parser("rollout", help="run the controller and write a CSV trace")
    p.add_argument("--model", required=True)
    p.add_argument("--start", required=True, help='start position as "x,y"')
    p.add_argument("--kernel", choices=sorted(CLI_KERNEL_NAMES), default="stable")
    p.add_argument("--perturb", help="perturbation script JSON")
    p.add_argument("--out", required=True)
    add_overrides(p)

    p = sub.add_parser("eval", help="score a model against a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--kernel", choices=sorted(CLI_KERNEL_NAMES), default="stable")
    p.add_argument("--report", required=True, help="output report JSON")
    add_overrides(p)

    p = sub.add_parser("serve", help="run the playground server")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--tick-ms", type=int, default=50)
    p.add_argument("--kernel", choices=sorted(CLI_KERNEL_NAMES), default="stable")
    add_overrides(p)

    return parser


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _load_overrides(args) -> dict[str, dict]:
    """Merge --config file keys with --set flags into {group: {key: value}}."""
    merged: dict[str, dict] = {g: {} for g in _OVERRIDE_GROUPS}
    entries: list[tuple[str, object]] = []
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("--config", f"not valid JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise SchemaError("--config", "expected an object of dotted keys")
        entries.extend(payload.items())
    for raw in getattr(args, "overrides", []):
        if "=" not in raw:
            raise InvalidArgumentError(f"--set {raw!r}: expected KEY=VALUE")
        key, _, value = raw.partition("=")
        entries.append((key.strip(), _parse_value(value.strip())))
    for key, value in entries:
        if "." not in key:
            raise InvalidArgumentError(f"override key {key!r}: expected group.name")
        group, _, name = key.partition(".")
        if group not in _OVERRIDE_GROUPS or name not in _OVERRIDE_GROUPS[group]:
            raise InvalidArgumentError(f"unknown override key {key!r}")
        merged[group][name] = value
    return merged


def _parse_start(raw: str) -> np.ndarray:
    try:
        values = [float(v) for v in raw.split(",")]
    except ValueError:
        raise InvalidArgumentError(
            f'--start {raw!r}: expected comma-separated numbers like "1.0,2.0"'
        ) from None
    if not values:
        raise InvalidArgumentError("--start: expected at least one coordinate")
    return np.array(values)


def _make_kernel(name: str, overrides: dict):
    return kernel_from_name(name, **overrides.get("kernel", {}))


def _make_controller_cfg(means, overrides: dict) -> ControllerConfig:
    return ControllerConfig.from_means(means, **overrides.get("controller", {}))


def _cmd_gen(args, overrides) -> int:
    dataset = generate_dataset(
        args.kind,
        args.seed,
        n_demos=args.n_demos,
        n_points=args.n_points,
        noise=args.noise,
        dt=args.dt,
    )
    save_dataset(dataset, args.out)
    print(f"wrote {args.out}: {len(dataset.demos)} demos, kind={args.kind}, seed={args.seed}")
    return 0


def _cmd_cluster(args, overrides) -> int:
    dataset = load_dataset(args.input)
    fit_cfg = FitConfig(**overrides.get("fit", {}))
    k = None if args.auto else args.k
    model = fit(dataset, k=k, config=fit_cfg)
    save_model(model, args.out)
    objective = model.objective_trace[-1] if model.objective_trace else float("nan")
    print(
        f"wrote {args.out}: k={model.k}, F={model.means[0].n_states}, "
        f"objective={objective:.6g}, iters={len(model.objective_trace)}"
    )
    return 0


def _cmd_rollout(args, overrides) -> int:
    model = load_model(args.model)
    start = _parse_start(args.start)
    if start.shape[0] != model.dim:
        raise InvalidArgumentError(
            f"--start: expected {model.dim} coordinates, got {start.shape[0]}"
        )
    kernel = _make_kernel(args.kernel, overrides)
    cfg = _make_controller_cfg(model.means, overrides)
    perturbations = ()
    if args.perturb:
        perturbations = load_perturbation_script(args.perturb)
    extra = overrides.get("rollout", {})
    result = rollout(
        model,
        start,
        kernel,
        cfg=cfg,
        perturbations=perturbations,
        max_ticks=extra.get("max_ticks"),
        convergence_tol=extra.get("convergence_tol"),
    )
    rollout_to_csv(result, args.out)
    print(
        f"wrote {args.out}: {result.n_ticks} ticks, converged={result.converged}, "
        f"terminal_cluster={result.terminal_cluster}"
    )
    return 0


def _cmd_eval(args, overrides) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.input)
    kernel = _make_kernel(args.kernel, overrides)
    cfg = _make_controller_cfg(model.means, overrides)
    extra = overrides.get("rollout", {})
    report = evaluate(model, dataset, kernel, cfg=cfg, max_ticks=extra.get("max_ticks"))
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    line = f"wrote {args.report}: mean_dtwd={report['mean_dtwd']}"
    if "terminal_accuracy" in report:
        line += f", terminal_accuracy={report['terminal_accuracy']:.3f}"
    if "reference_dtwd" in report:
        line += f" (reference {report['reference_dtwd']}, qualitative only)"
    print(line)
    return 0


def _cmd_serve(args, overrides) -> int:
    import uvicorn

    model = load_model(args.model)
    kernel = _make_kernel(args.kernel, overrides)
    cfg = _make_controller_cfg(model.means, overrides)
    serve_extra = overrides.get("serve", {})
    start = None
    if "start" in serve_extra:
        raw = serve_extra["start"]
        start = _parse_start(raw) if isinstance(raw, str) else np.asarray(raw, float)
    extra = overrides.get("rollout", {})
    app = build_app(
        model,
        kernel,
        cfg=cfg,
        start=start,
        tick_ms=args.tick_ms,
        max_ticks=extra.get("max_ticks"),
        convergence_tol=extra.get("convergence_tol"),
    )
    print(f"serving on {args.host}:{args.port} (tick {args.tick_ms} ms)")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_DISPATCH = {
    "gen": _cmd_gen,
    "cluster": _cmd_cluster,
    "rollout": _cmd_rollout,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage problems itself; fold them into the
        # validation exit code.
        return 0 if exc.code in (0, None) else 1
    try:
        overrides = _load_overrides(args)
        return _DISPATCH[args.command](args, overrides)
    except (InvalidArgumentError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CalmError, OSError, ValueError, TypeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
