"""Command-line workflows: dataset generation, training, constrained
sampling, and evaluation. Every command is deterministic given its flags and
seed and emits a manifest from which its outputs can be re-derived.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, constraints, io, metrics, pde
from .grid import Domain, DomainMismatchError
from .model import (
    ModelConfig,
    SpectralVectorField,
    TrainConfig,
    TrainingDivergedError,
    load_model,
    save_model,
    train,
)
from .noise import CholeskyError, NoiseSpec
from .sampler import NonFiniteSampleError, SamplerConfig, sample_batch

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(Exception):
    """Invalid or unreadable input data."""


def _parse_res(text: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in text.lower().split("x"))
    except ValueError as exc:
        raise DataError(f"bad resolution spec {text!r}") from exc
    if not parts or any(p < 2 for p in parts):
        raise DataError(f"bad resolution spec {text!r}")
    return parts


def _parse_range(text: str) -> tuple[str, float, float]:
    try:
        name, interval = text.split("=", 1)
        lo, hi = interval.split(":", 1)
        return name, float(lo), float(hi)
    except ValueError as exc:
        raise DataError(f"bad range spec {text!r}; expected key=lo:hi") from exc


def _family_domain(family: str, res: tuple[int, ...]) -> Domain:
    bounds = pde.FAMILY_BOUNDS[family]
    if len(res) != len(bounds):
        raise DataError(f"{family} needs {len(bounds)} resolutions, got {len(res)}")
    return Domain(tuple((lo, hi, r) for (lo, hi), r in zip(bounds, res)))


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "command")}


def _write_run_manifest(path: Path, command: str, args: dict, outputs: dict, started: float) -> None:
    io.write_manifest(
        path,
        {
            "command": command,
            "config": args,
            "tool_version": __version__,
            "outputs": outputs,
            "wall_clock": time.perf_counter() - started,
        },
    )


def cmd_gen_data(args) -> int:
    started = time.perf_counter()
    domain = _family_domain(args.system, _parse_res(args.res))
    prange = pde.default_param_range(args.system)
    if args.range:
        fixed = {}
        for spec in args.range:
            name, lo, hi = _parse_range(spec)
            if name not in {n for n, _, _ in prange.intervals}:
                raise DataError(f"{args.system} has no parameter {name!r}")
            fixed[name] = (lo, hi)
        prange = prange.replace(**fixed)
    rng = np.random.default_rng(args.seed)
    fields, params = pde.generate_dataset(
        args.system, args.n, domain, prange, rng, return_params=True
    )
    manifest = {
        "family": args.system,
        "domain": [list(a) for a in domain.axes],
        "seed": args.seed,
        "ranges": [list(iv) for iv in prange.intervals],
        "params": [dataclasses.asdict(p) for p in params],
    }
    io.write_sample_dir(args.out, fields, manifest)
    _write_run_manifest(
        Path(args.out) / "run_manifest.json",
        "gen-data",
        _args_dict(args),
        {"dataset": str(args.out)},
        started,
    )
    return EXIT_OK


def _noise_spec_from_args(args) -> NoiseSpec:
    return NoiseSpec(
        kind=args.noise,
        kernel_length=args.kernel_length,
        kernel_variance=args.kernel_variance,
    )


def cmd_train(args) -> int:
    started = time.perf_counter()
    dataset, data_manifest = io.read_sample_dir(args.data)
    if not dataset:
        raise DataError("dataset is empty")
    domain = dataset[0].domain
    if domain.ndim != len(_parse_res(args.modes)) and "x" in args.modes:
        raise DataError("mode count rank does not match the data")
    modes = _parse_res(args.modes) if "x" in args.modes.lower() else (int(args.modes),) * domain.ndim
    mcfg = ModelConfig(
        ndim=domain.ndim,
        layer_count=args.layers,
        modes=modes,
        width=args.width,
        bounds=domain.bounds,
    )
    rng = np.random.default_rng(args.seed)
    model = SpectralVectorField.initialize(mcfg, rng)
    tcfg = TrainConfig(
        learning_rate=args.lr,
        iterations=args.iters,
        batch_size=args.batch,
        seed=args.seed,
    )
    model, report = train(model, dataset, _noise_spec_from_args(args), tcfg, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    report_path = out.with_suffix(out.suffix + ".train_report.json")
    report_path.write_text(
        json.dumps(
            {
                "loss_curve": report.loss_curve,
                "final_loss": report.final_loss,
                "wall_clock": report.wall_clock,
                "seed": report.seed,
                "config": report.config,
                "noise": dataclasses.asdict(_noise_spec_from_args(args)),
                "dataset_manifest": data_manifest.get("family"),
            },
            indent=2,
        )
    )
    _write_run_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "train",
        _args_dict(args),
        {"model": str(out), "hash": io.sha256_file(out)},
        started,
    )
    return EXIT_OK


def _load_constraint(path: str | None, domain: Domain):
    if path is None:
        return constraints.IdentityConstraint(), None
    spec = json.loads(Path(path).read_text())
    return constraints.from_spec(spec, domain), spec


def cmd_sample(args) -> int:
    started = time.perf_counter()
    model = load_model(args.model)
    if model.config.bounds is None:
        raise DataError("model carries no domain bounds; cannot build the sampling grid")
    res = _parse_res(args.res)
    domain = Domain(tuple((lo, hi, r) for (lo, hi), r in zip(model.config.bounds, res)))
    constraint, cspec = _load_constraint(args.constraint, domain)
    if args.method == "euler" and not isinstance(constraint, constraints.IdentityConstraint):
        print(
            "warning: euler sampling does not enforce the constraint; "
            "constraint errors are reported only",
            file=sys.stderr,
        )
    cfg = SamplerConfig(
        euler_steps=args.steps,
        mixing_iterations=args.mixing,
        resample_interval=args.resample,
        seed=args.seed,
        method=args.method,
    )
    rng = np.random.default_rng(args.seed)
    samples, report = sample_batch(
        args.method,
        model,
        constraint,
        domain,
        _noise_spec_from_args(args),
        cfg,
        args.n,
        rng,
    )
    manifest = {
        "method": args.method,
        "constraint": cspec,
        "sampler": report.config,
        "constraint_errors": report.constraint_errors,
        "wall_clock": report.wall_clock,
        "seed": args.seed,
        "domain": [list(a) for a in domain.axes],
    }
    io.write_sample_dir(args.out, samples, manifest)
    _write_run_manifest(
        Path(args.out) / "run_manifest.json",
        "sample",
        _args_dict(args),
        {"samples": str(args.out)},
        started,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.perf_counter()
    generated, gen_manifest = io.read_sample_dir(args.generated)
    reference, _ = io.read_sample_dir(args.reference)
    gen_set = metrics.SampleSet(generated, gen_manifest)
    ref_set = metrics.SampleSet(reference)
    constraint, cspec = _load_constraint(args.constraint, gen_set.domain)
    truth = io.read_fgrid(args.truth) if args.truth else None
    report = metrics.evaluate(gen_set, ref_set, constraint, truth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    _write_run_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "eval",
        {**_args_dict(args), "constraint_spec": cspec},
        {"report": str(out), "hash": io.sha256_file(out)},
        started,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eci",
        description="Train flow-matching priors on analytic PDE families and "
        "draw hard-constrained samples from them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an exact-solution dataset")
    p.add_argument("--system", required=True, choices=pde.FAMILIES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--res", required=True, help="grid resolution, e.g. 32x32")
    p.add_argument("--range", action="append", help="override a parameter range, key=lo:hi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="pre-train the vector-field operator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--modes", default="8", help="frequency cutoff, e.g. 8 or 8x8")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--noise", choices=("matern", "white"), default="matern")
    p.add_argument("--kernel-length", type=float, default=0.05)
    p.add_argument("--kernel-variance", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw (constrained) samples from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("euler", "eci", "final_projection"), default="eci")
    p.add_argument("--constraint", help="constraint spec file (JSON)")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--mixing", type=int, default=5)
    p.add_argument("--resample", type=int, default=None)
    p.add_argument("--res", required=True)
    p.add_argument("--noise", choices=("matern", "white"), default="matern")
    p.add_argument("--kernel-length", type=float, default=0.05)
    p.add_argument("--kernel-variance", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="distributional evaluation of a sample set")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--constraint")
    p.add_argument("--truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, DomainMismatchError, io.CorruptFileError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, CholeskyError, NonFiniteSampleError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
