"""Command-line entry point: ``relprune <stage> --config cfg.json --workdir out``.

Exit codes: 0 success, 1 other failure, 2 configuration error,
3 training divergence, 4 no pruning candidate passed the BER gate.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .errors import ConfigError, NoImprovement, RelpruneError, TrainingDiverged
from .harness import STAGES, ExperimentConfig, StageError, load_experiment_config, run_stage
from .prune import SearchGrid

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_NO_IMPROVEMENT = 0, 1, 2, 3, 4

log = logging.getLogger("relprune")


def _percentiles(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad percentile list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relprune", description="Simulate, train, explain and prune an OFDM channel-estimation denoiser.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults are used when omitted")
    common.add_argument("--workdir", default="run", help="directory for artifacts (default: ./run)")
    common.add_argument("-v", "--verbose", action="store_true")

    explain = argparse.ArgumentParser(add_help=False)
    explain.add_argument("--epsilon", type=float)
    explain.add_argument("--n-samples", type=int)

    prune = argparse.ArgumentParser(add_help=False)
    prune.add_argument("--tau-min", type=float)
    prune.add_argument("--tau-max", type=float)
    prune.add_argument("--tau-step", type=float)
    prune.add_argument("--percentiles", type=_percentiles, help="comma separated, e.g. 15,20,25,30")
    prune.add_argument("--ref-snr", type=float)
    prune.add_argument("--ber-target", type=float)
    prune.add_argument("--retrain-epochs", type=int)
    prune.add_argument("--warm-start", action="store_true", default=None)

    helps = {
        "simulate": "generate the training dataset",
        "train": "train the full denoiser",
        "explain": "compute global relevance and the subcarrier taxonomy",
        "prune": "BER-gated grid search over input and neuron masks",
        "evaluate": "BER sweep for every scheme",
        "report": "FLOPs report",
        "pipeline": "run every stage in order",
    }
    parents = {"explain": [common, explain], "prune": [common, prune], "pipeline": [common, explain, prune]}
    for name, text in helps.items():
        sub.add_parser(name, parents=parents.get(name, [common]), help=text)
    return parser


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Return a copy of ``cfg`` with any command-line overrides applied."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    lrp = dict(cfg.lrp)
    if get("epsilon") is not None:
        lrp["epsilon"] = args.epsilon
    if get("n_samples") is not None:
        lrp["n_samples"] = args.n_samples

    grid = cfg.search
    taus = grid.taus
    if any(get(k) is not None for k in ("tau_min", "tau_max", "tau_step")):
        lo = get("tau_min") if get("tau_min") is not None else taus[0]
        hi = get("tau_max") if get("tau_max") is not None else lo
        taus = SearchGrid.from_range(lo, hi, get("tau_step") or 0.0, [0]).taus
    grid = SearchGrid(
        taus=taus,
        percentiles=get("percentiles") if get("percentiles") is not None else grid.percentiles,
        ber_target=get("ber_target") if get("ber_target") is not None else grid.ber_target,
        ref_snr_db=get("ref_snr") if get("ref_snr") is not None else grid.ref_snr_db,
    )
    changes = {"lrp": lrp, "search": grid}
    if get("retrain_epochs") is not None:
        if args.retrain_epochs < 1:
            raise ConfigError("--retrain-epochs must be positive")
        changes["retrain_epochs"] = args.retrain_epochs
    if get("warm_start"):
        changes["warm_start"] = True
    return dataclasses.replace(cfg, **changes)


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, TrainingDiverged):
        return EXIT_DIVERGED
    if isinstance(cause, NoImprovement):
        return EXIT_NO_IMPROVEMENT
    return EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_experiment_config(args.config) if args.config else ExperimentConfig()
        cfg = apply_overrides(cfg, args)
        stages = list(STAGES) if args.command == "pipeline" else [args.command]
        no_improvement = False
        for name in stages:
            out = run_stage(name, cfg, args.workdir)
            if name == "prune" and out.no_improvement:
                no_improvement = True
                print("no pruning candidate passed the BER gate; kept the full model", file=sys.stderr)
        if no_improvement:
            return EXIT_NO_IMPROVEMENT
    except (RelpruneError, argparse.ArgumentTypeError) as exc:
        print(f"relprune: error: {exc}", file=sys.stderr)
        return _exit_code(exc) if isinstance(exc, RelpruneError) else EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
