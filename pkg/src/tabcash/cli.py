"""Command-line front end: fit, predict, history, glm-baseline, synth.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 search
produced no valid pipeline. The default parallelism can be set through
the TABCASH_PARALLELISM environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ensemble as ensemble_mod
from . import engine, metrics, space as space_mod, synthdata
from .errors import (
    ConfigurationError,
    ContractError,
    DataError,
    EnsembleError,
    FormatError,
    OptimizationError,
    RegistrationError,
    SchemaError,
    TabcashError,
)
from .tabular import (
    BINARY,
    DEFAULT_MISSING_TOKENS,
    REGRESSION,
    Dataset,
    load_csv,
    read_csv_header,
    write_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_OPTIMIZATION = 4

ENV_PARALLELISM = "TABCASH_PARALLELISM"

MODEL_FILE = "model.json"
REPORT_FILE = "report.json"

_VALIDATION_MODES = ("none", "holdout", "kfold")
_STRATEGIES = ("none", "stacking", "bagging", "boosting")
_TASKS = ("auto", "regression", "binary_classification", "multiclass_classification")


@dataclass
class ExperimentConfig:
    """Everything one fit run needs; round-trips through JSON unchanged."""

    model_name: str = "experiment"
    data_path: str = ""
    response_column: str = ""
    test_path: str | None = None
    objective: str = "mse"
    max_evals: int = 16
    timeout: float = 600.0
    validation: str = "holdout"
    valid_size: float = 0.2
    folds: int = 4
    search_algo: str = "random"
    ensemble: str = "none"
    n_members: int = ensemble_mod.DEFAULT_MEMBERS
    voting: str | None = None
    feature_fraction: float = ensemble_mod.DEFAULT_FEATURE_FRACTION
    space: dict = field(default_factory=dict)
    task: str = "auto"
    seed: int = 0
    parallelism: int | None = None
    output_dir: str = "runs"
    offset_column: str | None = None
    missing_tokens: list = field(default_factory=lambda: sorted(DEFAULT_MISSING_TOKENS))
    column_kinds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.model_name:
            raise ConfigurationError("model_name must be non-empty")
        if self.max_evals < 1:
            raise ConfigurationError("max_evals must be at least 1")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")
        if self.validation not in _VALIDATION_MODES:
            raise ConfigurationError(f"unknown validation mode {self.validation!r}")
        if self.validation == "holdout" and not 0 < self.valid_size < 1:
            raise ConfigurationError("holdout requires 0 < valid_size < 1")
        if self.validation == "kfold" and self.folds < 2:
            raise ConfigurationError("kfold requires folds >= 2")
        if self.search_algo not in ("random", "adaptive"):
            raise ConfigurationError(f"unknown search_algo {self.search_algo!r}")
        if self.ensemble not in _STRATEGIES:
            raise ConfigurationError(f"unknown ensemble strategy {self.ensemble!r}")
        if self.n_members < 1:
            raise ConfigurationError("n_members must be at least 1")
        if not 0 < self.feature_fraction <= 1:
            raise ConfigurationError("feature_fraction must be in (0, 1]")
        if self.task not in _TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        if self.parallelism is not None and self.parallelism < 1:
            raise ConfigurationError("parallelism must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            name: getattr(self, name) for name in self.__dataclass_fields__
        }

    def resolved_parallelism(self) -> int:
        if self.parallelism is not None:
            return self.parallelism
        env = os.environ.get(ENV_PARALLELISM)
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigurationError(
                    f"{ENV_PARALLELISM} must be an integer, got {env!r}"
                ) from None
            if value < 1:
                raise ConfigurationError(f"{ENV_PARALLELISM} must be at least 1")
            return value
        return 1

    def protocol(self) -> engine.Protocol:
        return engine.Protocol(
            mode=self.validation,
            valid_fraction=self.valid_size,
            folds=self.folds,
            seed=self.seed,
        )

    def budget(self) -> engine.Budget:
        return engine.Budget(time_seconds=self.timeout, max_evals=self.max_evals)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    payload.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(payload)


def _load_train(config: ExperimentConfig) -> Dataset:
    return load_csv(
        config.data_path,
        config.response_column,
        missing_tokens=config.missing_tokens,
        task=None if config.task == "auto" else config.task,
        column_kinds=config.column_kinds,
    )


def _load_test(config: ExperimentConfig, train: Dataset) -> Dataset | None:
    if not config.test_path:
        return None
    test = load_csv(
        config.test_path,
        config.response_column,
        missing_tokens=config.missing_tokens,
        task=train.task,
        column_kinds=config.column_kinds,
    )
    if not train.is_classification():
        return test
    mapping = {label: code for code, label in enumerate(train.labels)}
    originals = test.original_labels(test.y)
    unknown = sorted({str(v) for v in originals if v not in mapping})
    if unknown:
        raise DataError(f"test response contains unseen class labels: {unknown}")
    y = np.asarray([mapping[v] for v in originals], dtype=np.int64)
    return Dataset(
        X=test.X,
        y=y,
        schema=test.schema,
        response=test.response,
        task=train.task,
        labels=train.labels,
    )


def _check_objective(metric: metrics.Metric, dataset: Dataset) -> None:
    """Reject objective/response mismatches before any search starts."""
    mid = metric.id
    if mid in ("r2", "mse", "mae", "poisson_deviance") and dataset.task != REGRESSION:
        raise ConfigurationError(f"objective {mid!r} requires a regression task")
    if mid == "accuracy" and not dataset.is_classification():
        raise ConfigurationError("objective 'accuracy' requires a classification task")
    if mid in ("auc", "gini") and dataset.task != BINARY:
        raise ConfigurationError(f"objective {mid!r} requires a binary task")
    if mid == "poisson_deviance" and (np.asarray(dataset.y, dtype=float) < 0).any():
        raise ConfigurationError(
            "objective 'poisson_deviance' requires a nonnegative response"
        )


def _report(dataset: Dataset, bundle: metrics.PredictionBundle) -> dict:
    """Per-metric report; metrics undefined on this output are skipped."""
    y = dataset.y
    out: dict[str, float] = {}
    if dataset.is_classification():
        candidates = ["accuracy"] + (["auc", "gini"] if dataset.task == BINARY else [])
    else:
        candidates = ["mse", "mae", "r2", "poisson_deviance"]
    for mid in candidates:
        try:
            out[mid] = metrics.get_metric(mid).raw(y, bundle)
        except TabcashError:
            continue
    return out


def _write_predictions(path, dataset: Dataset, bundle, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if bundle.probabilities is not None:
            lookup = np.asarray(labels, dtype=object)
            header = ["prediction"] + [f"class_{label}" for label in labels]
            writer.writerow(header)
            values = lookup[bundle.values.astype(int)]
            for v, row in zip(values, bundle.probabilities):
                writer.writerow([v] + [repr(float(p)) for p in row])
        else:
            writer.writerow(["prediction"])
            for v in bundle.values:
                writer.writerow([repr(float(v))])


def _fit_model(config: ExperimentConfig, train: Dataset, metric, search_space):
    """Dispatch on the ensemble strategy; returns (model, persist thunk)."""
    budget = config.budget()
    protocol = config.protocol()
    sampler = space_mod.get_sampler(config.search_algo)
    parallelism = config.resolved_parallelism()
    common = dict(
        sampler=sampler,
        metric=metric,
        parallelism=parallelism,
        protocol=protocol,
    )
    out_dir = Path(config.output_dir) / config.model_name
    config_echo = config.to_dict()

    if config.ensemble in ("none", "stacking"):
        try:
            result = engine.optimize(
                train, search_space, budget, seed=config.seed, **common
            )
        except OptimizationError as exc:
            # History is persisted even when the whole search failed.
            engine.persist_history(
                getattr(exc, "history", []),
                out_dir,
                experiment=config.model_name,
                config=config_echo,
            )
            raise
        if config.ensemble == "none":
            model = result.best
        else:
            model = ensemble_mod.build_stacking(
                result.history, config.n_members, voting=config.voting
            )
        engine.persist_history(
            result.history,
            out_dir,
            best=result.best,
            experiment=config.model_name,
            config=config_echo,
            elapsed_seconds=result.elapsed_seconds,
        )
        return model

    if config.ensemble == "bagging":
        model, histories = ensemble_mod.build_bagging(
            train,
            search_space,
            budget,
            n_members=config.n_members,
            feature_fraction=config.feature_fraction,
            seed=config.seed,
            voting=config.voting,
            **common,
        )
    else:
        model, histories = ensemble_mod.build_boosting(
            train,
            search_space,
            budget,
            n_members=config.n_members,
            seed=config.seed,
            **common,
        )
    for h, history in enumerate(histories, start=1):
        engine.persist_history(
            history,
            out_dir / f"group_{h:02d}",
            experiment=f"{config.model_name}/group_{h:02d}",
            config=config_echo if h == 1 else None,
        )
    return model


def cmd_fit(config: ExperimentConfig) -> int:
    train = _load_train(config)
    metric = metrics.get_metric(config.objective)
    _check_objective(metric, train)
    test = _load_test(config, train)
    search_space = space_mod.apply_overrides(
        space_mod.default_space(train.task, y=train.y, n_features=train.n_features),
        config.space,
    )
    out_dir = Path(config.output_dir) / config.model_name
    out_dir.mkdir(parents=True, exist_ok=True)

    model = _fit_model(config, train, metric, search_space)
    ensemble_mod.save_model(model, out_dir / MODEL_FILE)

    report = {}
    train_bundle = model.predict_bundle(train.X)
    report["train"] = _report(train, train_bundle)
    _write_predictions(
        out_dir / "predictions_train.csv", train, train_bundle, train.labels
    )
    if test is not None:
        X_test, ignored = (
            model.align(test) if test.feature_names != train.feature_names
            else (test.X, [])
        )
        if ignored:
            logger.warning("ignoring unknown test columns: %s", ignored)
        test_bundle = model.predict_bundle(X_test)
        report["test"] = _report(test, test_bundle)
        _write_predictions(
            out_dir / "predictions_test.csv", test, test_bundle, train.labels
        )
    with open(out_dir / REPORT_FILE, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)

    for split_name, values in report.items():
        rendered = "  ".join(f"{k}={v:.6g}" for k, v in sorted(values.items()))
        print(f"{split_name}: {rendered}")
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


def cmd_predict(model_path, data_path, output_path, missing_tokens=None) -> int:
    model = ensemble_mod.load_model(model_path)
    # Reload columns under the kinds frozen at fit time, so a column that
    # was forced categorical does not re-infer as numeric here.
    header = set(read_csv_header(data_path))
    kinds = {c.name: c.kind for c in model.feature_schema if c.name in header}
    data = load_csv(
        data_path,
        response_column=None,
        missing_tokens=missing_tokens or DEFAULT_MISSING_TOKENS,
        column_kinds=kinds,
    )
    X, ignored = model.align(data)
    if ignored:
        print(f"warning: ignoring unknown columns {ignored}", file=sys.stderr)
    bundle = model.predict_bundle(X)
    _write_predictions(output_path, data, bundle, model.labels)
    print(f"predictions written to {output_path}")
    return EXIT_OK


def _format_history_row(rec: dict, seconds: float | None) -> str:
    spec = space_mod.PipelineSpec.from_dict(rec["spec"])
    loss = "-" if rec["loss"] is None else f"{rec['loss']:.6g}"
    time_s = "-" if seconds is None else f"{seconds:.2f}s"
    return (
        f"k={rec['k']:<4d} status={rec['status']:<8s} loss={loss:<12s} "
        f"time={time_s:<9s} {spec.summary()}"
    )


def _load_all_history(directory) -> tuple[list[dict], dict[int, float]]:
    directory = Path(directory)
    if (directory / engine.HISTORY_FILE).exists():
        groups = [directory]
    else:
        groups = sorted(p for p in directory.glob("group_*") if p.is_dir())
        if not groups:
            raise FormatError(f"no history found under {directory}")
    records: list[dict] = []
    timings: dict[int, float] = {}
    offset = 0
    for group in groups:
        part = engine.load_history(group)
        timing_path = group / engine.TIMINGS_FILE
        part_timings = {}
        if timing_path.exists():
            with open(timing_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        t = json.loads(line)
                        part_timings[t["k"]] = t["fit_seconds"]
        for rec in part:
            timings[rec["k"] + offset] = part_timings.get(rec["k"])
            rec = dict(rec)
            rec["k"] = rec["k"] + offset
            records.append(rec)
        offset += len(part)
    return records, timings


def cmd_history(directory, top: int = 10) -> int:
    records, timings = _load_all_history(directory)
    valid = [r for r in records if r["status"] == "valid"]
    ranked = sorted(valid, key=lambda r: (r["loss"], r["k"]))[:top]
    print(f"top {len(ranked)} of {len(valid)} valid trials ({len(records)} total):")
    for rec in ranked:
        print("  " + _format_history_row(rec, timings.get(rec["k"])))
    print("incumbent curve (trial -> best engine loss so far):")
    best = None
    for rec in sorted(records, key=lambda r: r["k"]):
        if rec["status"] == "valid" and (best is None or rec["loss"] < best):
            best = rec["loss"]
        if best is not None:
            print(f"  {rec['k']:>4d} {best:.6g}")
    return EXIT_OK


def _glm_for_task(train: Dataset):
    from .models import LogisticModel, PoissonGLM, RidgeRegression

    if train.is_classification():
        return LogisticModel()
    y = np.asarray(train.y, dtype=float)
    if (y >= 0).all() and (y == np.round(y)).all():
        return PoissonGLM()
    return RidgeRegression(alpha=1e-3)


def cmd_glm_baseline(config: ExperimentConfig) -> int:
    """Fit the task-matched GLM on one-hot encoded, mean-imputed data."""
    from .preprocess import Encoder, Imputer

    train = _load_train(config)
    metric = metrics.get_metric(config.objective)
    _check_objective(metric, train)
    test = _load_test(config, train)

    offset_train = offset_test = None
    if config.offset_column:
        names = list(train.feature_names)
        if config.offset_column not in names:
            raise ConfigurationError(
                f"offset column {config.offset_column!r} not in the data"
            )
        j = names.index(config.offset_column)
        exposure = train.X[:, j].astype(float)
        if np.isnan(exposure).any() or (exposure <= 0).any():
            raise DataError("offset column must be positive and complete")
        offset_train = np.log(exposure)
        keep = np.ones(train.n_features, dtype=bool)
        keep[j] = False
        train = train.select_features(keep)
        if test is not None:
            test_names = list(test.feature_names)
            if config.offset_column not in test_names:
                raise ConfigurationError(
                    f"offset column {config.offset_column!r} not in the test data"
                )
            tj = test_names.index(config.offset_column)
            offset_test = np.log(test.X[:, tj].astype(float))
            tkeep = np.ones(test.n_features, dtype=bool)
            tkeep[tj] = False
            test = test.select_features(tkeep)

    encoder = Encoder("onehot").fit(train.X, train.schema)
    imputer = Imputer("mean").fit(encoder.transform(train.X))
    Xt = imputer.transform(encoder.transform(train.X))
    model = _glm_for_task(train)
    supports_offset = hasattr(model, "method") and model.method == "poisson_glm"
    if supports_offset:
        model.fit(Xt, train.y, offset=offset_train)
        train_pred = model.predict(Xt, offset=offset_train)
        train_bundle = metrics.PredictionBundle.regression(train_pred)
    elif train.is_classification():
        model.fit(Xt, train.y, n_classes=train.n_classes)
        train_bundle = model.predict_bundle(Xt)
    else:
        if offset_train is not None:
            raise ConfigurationError(
                "offset is only supported for count (Poisson) baselines"
            )
        model.fit(Xt, train.y)
        train_bundle = model.predict_bundle(Xt)

    report = {"train": _report(train, train_bundle)}
    if test is not None:
        Xe = imputer.transform(encoder.transform(test.X))
        if supports_offset:
            test_bundle = metrics.PredictionBundle.regression(
                model.predict(Xe, offset=offset_test)
            )
        else:
            test_bundle = model.predict_bundle(Xe)
        report["test"] = _report(test, test_bundle)

    out_dir = Path(config.output_dir) / f"{config.model_name}_glm"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / REPORT_FILE, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    for split_name, values in report.items():
        rendered = "  ".join(f"{k}={v:.6g}" for k, v in sorted(values.items()))
        print(f"glm {split_name}: {rendered}")
    print(f"report written to {out_dir / REPORT_FILE}")
    return EXIT_OK


def cmd_synth(args) -> int:
    coefficients = None
    if args.coefficients:
        coefficients = tuple(float(v) for v in args.coefficients.split(","))
    spec = synthdata.GeneratorSpec(
        kind=args.kind,
        n_rows=args.rows,
        n_features=args.features,
        coefficients=coefficients,
        intercept=args.intercept,
        imbalance_ratio=args.ratio,
        noise_scale=args.noise,
        missing_fraction=args.missing_fraction,
        n_categorical=args.categorical,
        seed=args.seed,
    )
    dataset = synthdata.generate(spec)
    write_csv(dataset, args.out)
    print(f"wrote {dataset.n_rows} rows x {dataset.n_features} features to {args.out}")
    return EXIT_OK


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to a JSON config file")
    parser.add_argument("--model-name", dest="model_name")
    parser.add_argument("--data", dest="data_path")
    parser.add_argument("--response-column", dest="response_column")
    parser.add_argument("--test-data", dest="test_path")
    parser.add_argument("--objective", dest="objective")
    parser.add_argument("--max-evals", dest="max_evals", type=int)
    parser.add_argument("--timeout", dest="timeout", type=float)
    parser.add_argument("--validation", dest="validation")
    parser.add_argument("--valid-size", dest="valid_size", type=float)
    parser.add_argument("--folds", dest="folds", type=int)
    parser.add_argument("--search-algo", dest="search_algo")
    parser.add_argument("--ensemble", dest="ensemble")
    parser.add_argument("--n-members", dest="n_members", type=int)
    parser.add_argument("--voting", dest="voting")
    parser.add_argument("--feature-fraction", dest="feature_fraction", type=float)
    parser.add_argument("--task", dest="task")
    parser.add_argument("--seed", dest="seed", type=int)
    parser.add_argument("--parallelism", dest="parallelism", type=int)
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--offset-column", dest="offset_column")


_CONFIG_KEYS = (
    "model_name",
    "data_path",
    "response_column",
    "test_path",
    "objective",
    "max_evals",
    "timeout",
    "validation",
    "valid_size",
    "folds",
    "search_algo",
    "ensemble",
    "n_members",
    "voting",
    "feature_fraction",
    "task",
    "seed",
    "parallelism",
    "output_dir",
    "offset_column",
)


def _config_from_args(args) -> ExperimentConfig:
    overrides = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabcash",
        description="Budgeted pipeline search for tabular supervised learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the configured search and save artifacts")
    _add_config_arguments(fit)

    predict = sub.add_parser("predict", help="apply a saved model to a CSV")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--output", required=True)

    history = sub.add_parser("history", help="show top trials and incumbent curve")
    history.add_argument("--dir", required=True)
    history.add_argument("--top", type=int, default=10)

    glm = sub.add_parser("glm-baseline", help="fit the task-matched GLM benchmark")
    _add_config_arguments(glm)

    synth = sub.add_parser("synth", help="generate a synthetic CSV dataset")
    synth.add_argument("--kind", choices=synthdata.KINDS, required=True)
    synth.add_argument("--rows", type=int, default=1000)
    synth.add_argument("--features", type=int, default=5)
    synth.add_argument("--coefficients", default=None)
    synth.add_argument("--intercept", type=float, default=0.0)
    synth.add_argument("--ratio", type=float, default=9.0)
    synth.add_argument("--noise", type=float, default=1.0)
    synth.add_argument("--missing-fraction", type=float, default=0.0)
    synth.add_argument("--categorical", type=int, default=0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(_config_from_args(args))
        if args.command == "predict":
            return cmd_predict(args.model, args.data, args.output)
        if args.command == "history":
            return cmd_history(args.dir, args.top)
        if args.command == "glm-baseline":
            return cmd_glm_baseline(_config_from_args(args))
        if args.command == "synth":
            return cmd_synth(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigurationError, RegistrationError, ContractError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, DataError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OptimizationError, EnsembleError) as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        if isinstance(exc, OptimizationError) and exc.failures:
            for reason, count in sorted(exc.failures.items()):
                print(f"  {count:>4d} x {reason}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except TabcashError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
