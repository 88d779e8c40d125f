"""Command-line entry point: ``gibbsfit <command> [options]``.

Exit status is 0 on success, 1 on input errors and 2 when a fit is
infeasible or fails to converge.  Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import serialization as ser
from .gibbs import FIT_TOL, GibbsFitError, fit_gibbs
from .operators import DensityMatrix, ObservableSet, pauli, relative_entropy, von_neumann_entropy
from .selection import (
    DEFAULT_MAX_SIZE,
    InfiniteDivergence,
    RelevanceHypothesis,
    enumerate_hypotheses,
    rank_hypotheses,
)
from .tomography import (
    DEFAULT_PRIOR_WIDTH,
    DEFAULT_RESOLUTION,
    LIKELIHOODS,
    SUPPORT_MODES,
    generate_ensemble,
    qubit_posterior,
    sample_stream,
    simulate_sample,
)

log = logging.getLogger("gibbsfit")

COMMANDS = ("gen", "fit", "score", "select", "entropy", "demo-bloch")
EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    out: Optional[Path] = None
    seed: Optional[int] = None
    sigma: Optional[Path] = None
    tolerance: float = FIT_TOL
    max_size: int = DEFAULT_MAX_SIZE
    resolution: int = DEFAULT_RESOLUTION
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.command in ("gen", "demo-bloch") and self.seed is None:
            raise InputError(f"--seed is required for {self.command}")
        if self.command == "gen" and self.out is None:
            raise InputError("--out is required for gen")
        paths = [Path(p).resolve() for p in self.inputs.values() if p is not None]
        if self.sigma is not None:
            paths.append(Path(self.sigma).resolve())
        if self.out is not None and Path(self.out).resolve() in paths:
            raise InputError("output path coincides with an input path")


@contextlib.contextmanager
def _output_lock(out: Optional[Path], is_dir: bool):
    """Advisory lock file next to (or inside) the output location."""
    if out is None:
        yield
        return
    if is_dir:
        out.mkdir(parents=True, exist_ok=True)
        lock = out / ".gibbsfit.lock"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        lock = out.with_name(out.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InputError(f"{lock} exists; another run is writing to {out}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(lock)


def _load_sigma(config: RunConfig, dim: int) -> DensityMatrix:
    if config.sigma is None:
        return DensityMatrix.maximally_mixed(dim)
    sigma = ser.state_from_json(ser.load_json(config.sigma))
    if sigma.dim != dim:
        raise InputError(f"sigma has dimension {sigma.dim}, expected {dim}")
    return sigma


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _cmd_gen(config: RunConfig) -> int:
    spec = ser.ensemble_spec_from_json(ser.load_json(config.inputs["spec"]), seed=config.seed)
    with _output_lock(config.out, is_dir=True):
        records = generate_ensemble(spec)
        manifest = ser.write_ensemble(records, spec, config.out)
    log.info("wrote %d samples and %s", len(records), manifest)
    return EXIT_OK


def _cmd_fit(config: RunConfig) -> int:
    obs_path = Path(config.inputs["observables"])
    obs = ser.observable_set_from_json(ser.load_json(obs_path), default_label=obs_path.stem)
    targets = config.options["targets"]
    if len(targets) != len(obs):
        raise InputError(f"{len(targets)} targets for {len(obs)} observables")
    sigma = _load_sigma(config, obs.dim)
    report = fit_gibbs(obs, targets, sigma, tol=config.tolerance)
    log.info("converged in %d iterations, residual %.3g", report.iterations, report.residual)
    payload = ser.gibbs_model_to_json(report.model)
    if config.out is None:
        print(json.dumps(payload, indent=2))
    else:
        with _output_lock(config.out, is_dir=False):
            ser.dump_json(payload, config.out)
    return EXIT_OK


def _ranked(config: RunConfig, hypotheses_from):
    records, _ = ser.read_ensemble(config.inputs["ensemble"])
    pool = ser.observable_set_from_json(ser.load_json(config.inputs["pool"]))
    sigma = _load_sigma(config, pool.dim)
    hypotheses = hypotheses_from(pool)
    return rank_hypotheses(records, hypotheses, pool, sigma)


def _emit_ranking(config: RunConfig, ranked) -> int:
    for row in ser.ranking_rows(ranked):
        print(f"{row['label']}\t{_fmt(row['total'])}\t{_fmt(row['posterior_weight'])}")
    if config.out is not None:
        with _output_lock(config.out, is_dir=True):
            ser.write_ranking(ranked, config.out / "ranking.json", config.out / "ranking.csv")
    return EXIT_OK


def _cmd_score(config: RunConfig) -> int:
    specs = config.options.get("hypotheses") or []

    def build(pool):
        if not specs:
            return [RelevanceHypothesis.from_indices(range(len(pool)), pool)]
        out = []
        for s in specs:
            labels = [t.strip() for t in s.strip().strip("{}").split(",") if t.strip()]
            out.append(RelevanceHypothesis.from_labels(labels, pool))
        return out

    return _emit_ranking(config, _ranked(config, build))


def _cmd_select(config: RunConfig) -> int:
    max_size = config.max_size

    def build(pool):
        return enumerate_hypotheses(pool, min(max_size, len(pool)))

    return _emit_ranking(config, _ranked(config, build))


def _cmd_entropy(config: RunConfig) -> int:
    mu = ser.state_from_json(ser.load_json(config.inputs["state"]))
    print(f"S[mu] = {_fmt(von_neumann_entropy(mu))}")
    ref = config.inputs.get("reference")
    if ref is not None:
        rho = ser.state_from_json(ser.load_json(ref))
        print(f"S(mu||rho) = {_fmt(relative_entropy(mu, rho))}")
    return EXIT_OK


def _cmd_demo_bloch(config: RunConfig) -> int:
    opts = config.options
    xbar = opts.get("xbar")
    if xbar is None:
        true_x = opts.get("true_x", 0.4)
        true = DensityMatrix.from_bloch([true_x, 0.0, 0.0])
        means = simulate_sample(true, ObservableSet([pauli("X")], ["X"]), opts["N"], sample_stream(config.seed, 0))
        xbar = float(means.values[0])
        log.info("simulated xbar = %s from <X> = %s", xbar, true_x)
    post = qubit_posterior(
        opts["support"],
        prior_width=opts["width"],
        xbar=xbar,
        N=opts["N"],
        resolution=config.resolution,
        likelihood=opts["likelihood"],
    )
    mode = post.mode()
    print(f"xbar = {_fmt(xbar)}")
    print("mode = " + " ".join(_fmt(c) for c in mode))
    print(f"tv(prior, posterior) = {_fmt(post.total_variation(post.prior))}")
    if config.out is not None:
        with _output_lock(config.out, is_dir=False):
            post.to_csv(config.out)
    return EXIT_OK


_HANDLERS = {
    "gen": _cmd_gen,
    "fit": _cmd_fit,
    "score": _cmd_score,
    "select": _cmd_select,
    "entropy": _cmd_entropy,
    "demo-bloch": _cmd_demo_bloch,
}


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        config.validate()
        return _HANDLERS[config.command](config)
    except (GibbsFitError, InfiniteDivergence) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (ValueError, OSError, KeyError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsfit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sigma=True, out=True):
        if sigma:
            p.add_argument("--sigma", type=Path, help="reference state JSON (default: I/d)")
        if out:
            p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gen", help="simulate and reconstruct an ensemble")
    p.add_argument("--spec", type=Path, required=True)
    common(p, sigma=False)

    p = sub.add_parser("fit", help="fit a generalized Gibbs state to target expectations")
    p.add_argument("--observables", type=Path, required=True)
    p.add_argument("--targets", type=float, nargs="+", required=True)
    p.add_argument("--tolerance", type=float, default=FIT_TOL)
    common(p)

    for name, helptext in (("score", "score given relevance hypotheses"), ("select", "rank all small hypotheses")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--ensemble", type=Path, required=True)
        p.add_argument("--pool", type=Path, required=True)
        if name == "score":
            p.add_argument("--hypothesis", action="append", dest="hypotheses", help='labels, e.g. "H,M"')
        else:
            p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
        common(p)

    p = sub.add_parser("entropy", help="entropy and relative entropy of states")
    p.add_argument("--state", type=Path, required=True)
    p.add_argument("--reference", type=Path)

    p = sub.add_parser("demo-bloch", help="qubit grid posterior after measuring X")
    p.add_argument("--support", choices=SUPPORT_MODES, default="full-ball")
    p.add_argument("--xbar", type=float, help="observed mean of X (default: simulate one)")
    p.add_argument("--true-x", type=float, default=0.4, help="<X> of the simulated true state")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--width", type=float, default=DEFAULT_PRIOR_WIDTH)
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--likelihood", choices=LIKELIHOODS, default="measurement")
    common(p, sigma=False)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cmd = args.command
    inputs = {k: getattr(args, k) for k in ("spec", "observables", "ensemble", "pool", "state", "reference") if getattr(args, k, None) is not None}
    options = {}
    if cmd == "fit":
        options["targets"] = list(args.targets)
    if cmd == "score":
        options["hypotheses"] = args.hypotheses
    if cmd == "demo-bloch":
        options.update(support=args.support, xbar=args.xbar, true_x=args.true_x, N=args.N, width=args.width, likelihood=args.likelihood)
    return RunConfig(
        command=cmd,
        inputs=inputs,
        out=getattr(args, "out", None),
        seed=getattr(args, "seed", None),
        sigma=getattr(args, "sigma", None),
        tolerance=getattr(args, "tolerance", FIT_TOL),
        max_size=getattr(args, "max_size", DEFAULT_MAX_SIZE),
        resolution=getattr(args, "resolution", DEFAULT_RESOLUTION),
        options=options,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
