"""CLI interface for the RF-PUF simulator.

Usage:
    python -m rfpuf.cli run --config config/experiment.toml
    python -m rfpuf.cli sweep --variable hidden_width --values 10,50,100
    python -m rfpuf.cli gen --out runs/a && python -m rfpuf.cli train --out runs/a
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from rfpuf.cli_output import CLIOutput, OutputFormat
from rfpuf.config import (
    DEFAULT_CONFIG_PATH,
    ExperimentConfig,
    Settings,
    load_experiment_config,
    load_settings,
)
from rfpuf.errors import ConfigurationError, PipelineError
from rfpuf.harness import (
    SweepSpec,
    evaluate_saved_model,
    generate_dataset,
    recompute_report,
    run_experiment,
    run_sweep,
    train_saved_dataset,
    write_dataset,
)
from rfpuf.pufmetrics import EvalReport, PufDistanceReport
from rfpuf.store import RunLedger
from rfpuf.utils.logging import clear_run_context, configure_logging, get_logger

# Log file location (excluded from git via .tmp/)
CLI_LOG_FILE = Path(".tmp/rfpuf.log")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PIPELINE = 2
EXIT_ACCEPTANCE = 3

SWEEP_VARIABLES = ("n_tx", "hidden_width", "ebn0_sigma_db", "frames_per_device_train", "rrc_ablation")

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment TOML (default: config/experiment.toml)")
    common.add_argument("--seed", type=int, help="Override master_seed")
    common.add_argument("--out", type=Path, help="Override output_dir")
    common.add_argument("--rrc-ablation", action="store_true", help="Bypass the receive matched filter")
    common.add_argument("--workers", type=int, help="Processes for frame generation")
    common.add_argument("--check", action="store_true", help="Exit 3 when acceptance thresholds fail")
    common.add_argument("-q", "--quiet", action="store_true", help="Suppress status lines")
    common.add_argument("-v", "--verbose", action="store_true", help="Also log to the console")
    common.add_argument(
        "-o",
        "--output",
        choices=["text", "json", "rich"],
        default="text",
        help="Output format (default: text)",
    )

    parser = argparse.ArgumentParser(
        description="RF-PUF simulator: transmitter fingerprint identification and PUF metrics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m rfpuf.cli run
  python -m rfpuf.cli run --seed 7 --out runs/seed7 --check
  python -m rfpuf.cli sweep --variable n_tx --values 10,25,50
  python -m rfpuf.cli sweep --variable rrc_ablation --values false,true
  python -m rfpuf.cli report --out runs/default
  python -m rfpuf.cli history -o json
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("gen", parents=[common], help="Generate and store the datasets only")
    commands.add_parser("train", parents=[common], help="Train on a stored dataset")
    commands.add_parser("eval", parents=[common], help="Evaluate a stored model")
    commands.add_parser("run", parents=[common], help="Full pipeline")
    sweep = commands.add_parser("sweep", parents=[common], help="Repeat the pipeline over one variable")
    sweep.add_argument("--variable", choices=SWEEP_VARIABLES, required=True)
    sweep.add_argument("--values", required=True, help="Comma-separated values")
    commands.add_parser("report", parents=[common], help="Recompute metrics from stored CSVs")
    history = commands.add_parser("history", parents=[common], help="List recorded runs")
    history.add_argument("--limit", type=int, default=20)
    return parser


def parse_sweep_values(variable: str, text: str) -> List[Any]:
    """Split ``text`` on commas and convert to the variable's type."""
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise ValueError("--values is empty")
    if variable == "rrc_ablation":
        truthy = {"1", "true", "on", "yes"}
        falsy = {"0", "false", "off", "no"}
        out: List[Any] = []
        for item in items:
            if item.lower() not in truthy | falsy:
                raise ValueError(f"not a boolean: {item!r}")
            out.append(item.lower() in truthy)
        return out
    if variable == "ebn0_sigma_db":
        return [float(item) for item in items]
    return [int(item) for item in items]


def resolve_config(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    """Load the experiment document and apply environment and flag overrides."""
    path = args.config or settings.config_path
    if path is None and DEFAULT_CONFIG_PATH.exists():
        path = DEFAULT_CONFIG_PATH
    cfg = load_experiment_config(path)

    overrides: Dict[str, Any] = {}
    if settings.output_dir is not None:
        overrides["output_dir"] = settings.output_dir
    if settings.workers is not None:
        overrides["workers"] = settings.workers
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.rrc_ablation:
        overrides["rrc_ablation"] = True
    if not overrides:
        return cfg
    try:
        return cfg.with_overrides(**overrides)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid command-line override: {exc}") from exc


def report_payload(report: EvalReport, distances: Optional[PufDistanceReport]) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "n_classes": report.n_classes,
        "n_evaluations": report.total,
        "p_false": report.p_false,
    }
    if distances is not None:
        payload.update(
            d_intra_worst_ppm=distances.d_intra_worst_ppm,
            d_inter_worst_ppm=distances.d_inter_worst_ppm,
            identifiable=distances.identifiable,
            cfo_intra_worst_ppm=distances.cfo_intra_worst_ppm,
            cfo_inter_worst_ppm=distances.cfo_inter_worst_ppm,
        )
    return payload


def acceptance_failures(cfg: ExperimentConfig, payload: Dict[str, Any]) -> List[str]:
    failures = []
    if payload["p_false"] > cfg.acceptance.max_p_false:
        failures.append(f"p_false {payload['p_false']:.4f} > {cfg.acceptance.max_p_false}")
    if cfg.acceptance.require_identifiable and not payload.get("identifiable", False):
        failures.append("population is not identifiable (d_intra >= d_inter)")
    return failures


def execute(args: argparse.Namespace, cfg: ExperimentConfig, output: CLIOutput, ledger: Optional[RunLedger]) -> int:
    """Run one subcommand; returns the exit code for acceptance checks."""
    out = cfg.output_dir
    payload: Optional[Dict[str, Any]] = None

    if args.command == "gen":
        output.status(f"Generating {cfg.population.n_tx} devices into {out}")
        data = generate_dataset(cfg)
        write_dataset(data, out)
        output.result(
            {
                "train_rows": len(data.train),
                "eval_rows": len(data.eval),
                "ebn0_clamped_frames": data.clamped_frames,
                "output_dir": str(out),
            }
        )
    elif args.command == "train":
        output.status(f"Training on {out}")
        report = train_saved_dataset(cfg, out)
        output.result(
            {
                "epochs": report.epochs,
                "final_loss": report.losses[-1] if report.losses else None,
                "val_accuracy": report.val_accuracy[-1] if report.val_accuracy else None,
                "train_seconds": report.wall_seconds,
            }
        )
    elif args.command == "eval":
        output.status(f"Evaluating stored model in {out}")
        payload = report_payload(*evaluate_saved_model(cfg, out))
        output.result(payload)
    elif args.command == "run":
        output.status(f"Running {cfg.population.n_tx} devices, seed {cfg.master_seed}")
        result = run_experiment(cfg, ledger=ledger)
        payload = {k: v for k, v in result.summary.items() if k not in ("config", "seeds")}
        output.result(payload, title="Run summary")
    elif args.command == "sweep":
        try:
            values = parse_sweep_values(args.variable, args.values)
        except ValueError as exc:
            raise ConfigurationError(f"Invalid --values: {exc}") from exc
        output.status(f"Sweeping {args.variable} over {values}")
        frame = run_sweep(SweepSpec(variable=args.variable, values=values, base=cfg), ledger=ledger)
        output.table(frame, title=f"Sweep over {args.variable}")
        if args.check and (frame["error"] != "").any():
            output.error("one or more sweep points failed")
            return EXIT_ACCEPTANCE
    elif args.command == "report":
        payload = report_payload(*recompute_report(out, cfg))
        output.result(payload, title="Report")
    elif args.command == "history":
        if ledger is None:
            output.warning("Run ledger disabled (RFPUF_LEDGER_URL is empty)")
            return EXIT_OK
        rows = ledger.recent_runs(limit=args.limit)
        columns = ["run_id", "created_at", "n_tx", "hidden_sizes", "rrc_ablation", "p_false", "d_intra_worst_ppm", "d_inter_worst_ppm", "output_dir"]
        frame = pd.DataFrame([row.model_dump() for row in rows], columns=columns)
        output.table(frame, title="Recent runs")

    if args.check and payload is not None:
        failures = acceptance_failures(cfg, payload)
        for failure in failures:
            output.error(f"Acceptance check failed: {failure}")
        if failures:
            return EXIT_ACCEPTANCE
        output.info("Acceptance checks passed")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entrypoint."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Determine output format
    try:
        output_format = OutputFormat(args.output)
    except ValueError:
        output_format = OutputFormat.TEXT
    output = CLIOutput(format=output_format, verbose=args.verbose, quiet=args.quiet)

    try:
        settings = load_settings()
    except ConfigurationError as exc:
        output.error(f"Failed to load settings: {exc}")
        return EXIT_CONFIG

    # Verbose mode: logs to both console and file; normal mode: file only
    configure_logging(
        level="DEBUG" if args.verbose else settings.log_level,
        log_file=CLI_LOG_FILE,
        console=args.verbose,
        json_logs=settings.json_logs,
    )
    clear_run_context()

    try:
        cfg = resolve_config(args, settings)
    except ConfigurationError as exc:
        output.error(str(exc))
        return EXIT_CONFIG

    ledger = RunLedger(settings.ledger_url) if settings.ledger_url else None
    try:
        return execute(args, cfg, output, ledger)
    except (ConfigurationError, ValidationError) as exc:
        output.error(str(exc))
        return EXIT_CONFIG
    except PipelineError as exc:
        output.error(f"Pipeline failed at stage '{exc.stage}': {exc}")
        return EXIT_PIPELINE
    except (FileNotFoundError, ValueError) as exc:
        logger.error("command_failed", command=args.command, error=str(exc))
        output.error(str(exc))
        return EXIT_PIPELINE
    except KeyboardInterrupt:
        output.info("\nInterrupted")
        return EXIT_PIPELINE


def cli_main() -> None:
    """Console-script wrapper."""
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
