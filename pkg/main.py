import argparse
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

from app.config import Config
from app.errors import BhamError, ConfigError
from app.models import Criterion, EmSettings, FamilyKind, PriorKind, RunConfig, SimConfig, SolverKind
from app.runner import outputs, run_fit, run_predict, run_report, run_simulate, run_tune_fit
from app.study import run_study

logger = logging.getLogger("bham")


def _choices(enum) -> List[str]:
    return [member.value for member in enum]


def _add_output(parser: argparse.ArgumentParser):
    parser.add_argument("--output-dir", default=Config.OUTPUT_DIR, help="where result files go")


def _add_model_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--data", required=True, help="training CSV with a header row")
    parser.add_argument("--outcome", default="y", help="outcome column")
    parser.add_argument("--predictors", help="comma-separated predictor columns (default: all others)")
    parser.add_argument("--family", choices=_choices(FamilyKind), default=FamilyKind.GAUSSIAN.value)
    parser.add_argument("--solver", choices=_choices(SolverKind), default=SolverKind.EM_CD.value)
    parser.add_argument("--prior", choices=_choices(PriorKind), default=PriorKind.DE_MIXTURE.value)
    parser.add_argument("--s1", type=float, default=Config.S1)
    parser.add_argument("--default-k", type=int, default=Config.DEFAULT_K, help="bases for unlisted predictors")
    parser.add_argument("--specs", help="JSON file of per-column spline settings")
    parser.add_argument("--threshold", type=float, default=Config.THRESHOLD)
    parser.add_argument("--test-data", help="held-out CSV scored with the final model")
    parser.add_argument("--epsilon", type=float, default=Config.EPSILON)
    parser.add_argument("--max-em-iter", type=int, default=Config.MAX_EM_ITER)
    _add_output(parser)


def _add_sim_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--family", choices=_choices(FamilyKind), default=FamilyKind.GAUSSIAN.value)
    parser.add_argument("--p", type=int, default=4)
    parser.add_argument("--n-train", type=int, default=500)
    parser.add_argument("--n-test", type=int, default=1000)
    parser.add_argument("--dispersion", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=Config.SEED)
    _add_output(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bham", description="Spike-and-slab additive models")
    parser.add_argument("--log-level", default=Config.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="write simulated train.csv / test.csv")
    _add_sim_flags(simulate)

    fit = sub.add_parser("fit", help="fit at a fixed s0")
    _add_model_flags(fit)
    fit.add_argument("--s0", type=float, required=True)

    tune = sub.add_parser("tune", help="choose s0 by k-fold CV, then refit")
    _add_model_flags(tune)
    tune.add_argument("--s0-min", type=float, default=Config.S0_MIN)
    tune.add_argument("--s0-max", type=float, default=Config.S0_MAX)
    tune.add_argument("--s0-count", type=int, default=Config.S0_COUNT)
    tune.add_argument("--folds", type=int, default=Config.FOLDS)
    tune.add_argument("--criterion", choices=_choices(Criterion), default=Criterion.DEVIANCE.value)
    tune.add_argument("--seed", type=int, default=Config.SEED)
    tune.add_argument("--n-jobs", type=int, default=Config.N_JOBS)

    predict = sub.add_parser("predict", help="score a CSV with a saved model")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    _add_output(predict)

    report = sub.add_parser("report", help="coefficients, selection and curves of a saved model")
    report.add_argument("--model", required=True)
    report.add_argument("--threshold", type=float, default=Config.THRESHOLD)
    _add_output(report)

    study = sub.add_parser("study", help="Monte Carlo replicates x solvers")
    _add_sim_flags(study)
    study.add_argument("--replicates", type=int, default=10)
    study.add_argument("--solvers", default="em_cd,em_iwls", help="comma-separated")
    study.add_argument("--folds", type=int, default=Config.SIM_FOLDS)
    study.add_argument("--n-jobs", type=int, default=Config.N_JOBS)
    return parser


def _split(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def to_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge parsed flags over Config defaults; pydantic errors become ConfigError."""
    values: Dict = {"command": args.command, "output_dir": args.output_dir}
    try:
        if args.command in ("simulate", "study"):
            values["sim"] = SimConfig(n_train=args.n_train, n_test=args.n_test, p=args.p, family=args.family,
                                      dispersion=args.dispersion, seed=args.seed)
            values["seed"] = args.seed
        if args.command == "study":
            values.update(replicates=args.replicates, solvers=_split(args.solvers), folds=args.folds,
                          n_jobs=args.n_jobs)
        if args.command in ("fit", "tune"):
            values.update(
                data_path=args.data,
                outcome_column=args.outcome,
                predictors=_split(args.predictors),
                family=args.family,
                solver=args.solver,
                prior_kind=args.prior,
                s1=args.s1,
                default_k=args.default_k,
                spec_path=args.specs,
                threshold=args.threshold,
                test_data_path=args.test_data,
                settings=EmSettings(epsilon=args.epsilon, max_em_iter=args.max_em_iter),
            )
        if args.command == "fit":
            values["s0"] = args.s0
        if args.command == "tune":
            values.update(s0_min=args.s0_min, s0_max=args.s0_max, s0_count=args.s0_count, folds=args.folds,
                          criterion=args.criterion, seed=args.seed, n_jobs=args.n_jobs)
        if args.command in ("predict", "report"):
            values["model_path"] = args.model
        if args.command == "predict":
            values["data_path"] = args.data
        if args.command == "report":
            values["threshold"] = args.threshold
        config = RunConfig(**values)
        if args.command == "tune":
            config.grid()
        if args.command == "fit":
            config.prior(config.s0)
        return config
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def run_study_command(config: RunConfig) -> Dict:
    runs, summary = run_study(config.sim, config.replicates, config.solvers, config.folds,
                              settings=config.settings, n_jobs=config.n_jobs)
    with outputs(config.output_dir) as writer:
        files = {
            "runs": writer.csv(runs, "study_runs.csv"),
            "summary": writer.csv(summary, "study_summary.csv"),
        }
    print("\n" + "=" * 70)
    print("STUDY SUMMARY")
    print("=" * 70)
    print(summary.to_string(index=False))
    print("=" * 70 + "\n")
    return {"runs": runs, "summary": summary, "files": files}


COMMANDS = {
    "simulate": run_simulate,
    "fit": run_fit,
    "tune": run_tune_fit,
    "predict": run_predict,
    "report": run_report,
    "study": run_study_command,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = to_run_config(args)
        result = COMMANDS[args.command](config)
    except BhamError as exc:
        logger.error(f"[ERROR] {type(exc).__name__}: {exc}")
        return exc.exit_code
    except Exception as exc:
        logger.error(f"[ERROR] unexpected failure: {exc}")
        logger.debug("traceback", exc_info=True)
        return 1

    for name, path in result.get("files", {}).items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
