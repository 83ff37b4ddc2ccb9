"""Command-line runner: `offgrid.py certify|trial|study --config FILE`."""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from experiments import load_experiment, prepare, run_certificate_report, run_study, run_trial
from utils_offgrid import OffgridError, PreconditionError, frame_to_csv, get_logger, get_threads, load_config, rows_to_df

logger = get_logger("cli")


def _certify(args: argparse.Namespace) -> int:
    cfg = load_experiment(load_config(args.config), seed=args.seed)
    report = run_certificate_report(cfg, out_dir=args.out)
    # stdout krijgt precies één tabel; --out schrijft ze allebei
    table = report.verification if args.table == "verification" else report.diagnostics
    sys.stdout.write(frame_to_csv(table))
    if not report.passed:
        logger.warning("Certificaatrapport bevat gefaalde rijen")
    return 0


def _trial(args: argparse.Namespace) -> int:
    cfg = load_experiment(load_config(args.config), seed=args.seed)
    result = run_trial(prepare(cfg), args.rep)
    logger.info("Trial %d klaar in %d ms", result.rep, result.runtime_ms)
    df = rows_to_df([result.to_row(include_runtime=False)])
    sys.stdout.write(frame_to_csv(df, Path(args.out) / f"trial_{args.rep}.csv" if args.out else None))
    return 0


def _study(args: argparse.Namespace) -> int:
    cfg = load_experiment(load_config(args.config), seed=args.seed)
    result = run_study(cfg, out_dir=args.out, threads=get_threads(args.threads))
    sys.stdout.write(frame_to_csv(result.summary))
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Pad naar de TOML-experimentconfig.")
    common.add_argument("--seed", type=int, default=None, help="Overschrijft study.seed.")
    common.add_argument("--threads", type=int, default=None, help="Aantal workers (anders OFFGRID_THREADS).")

    parser = argparse.ArgumentParser(prog="offgrid", description="Off-the-grid multi-signal recovery experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("certify", parents=[common], help="Certificaatrapport (diagnostiek + verificatie).")
    p.add_argument("--out", default=None, help="Map voor de CSV-bestanden.")
    p.add_argument("--table", choices=["diagnostics", "verification"], default="diagnostics",
                   help="Welke tabel naar stdout gaat.")
    p.set_defaults(func=_certify)
    p = sub.add_parser("trial", parents=[common], help="Eén replicatie draaien.")
    p.add_argument("--rep", type=int, default=0, help="Replicatie-index.")
    p.add_argument("--out", default=None, help="Map voor trial_<rep>.csv.")
    p.set_defaults(func=_trial)
    p = sub.add_parser("study", parents=[common], help="Monte-Carlo-studie over de sweeps.")
    p.add_argument("--out", required=True, help="Map voor summary.csv, replicates.csv en plotdata.")
    p.set_defaults(func=_study)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as e:
        logger.error("Geweigerd: %s", e)
        return e.exit_code
    except OffgridError as e:
        logger.exception("Fout: %s", e)
        return e.exit_code
    except Exception as e:
        logger.exception("Onverwachte fout: %s", e)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
