"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines. The two benchmark criteria (6 and 7) run full searches and take a
few minutes combined.
"""

import functools
import json
import math
import time

import numpy as np
import pytest

from tabcash.balance import Balancer, profile
from tabcash.cli import main
from tabcash.engine import Budget, Protocol, incumbent_curve, optimize, persist_history
from tabcash.ensemble import build_bagging, build_boosting, build_stacking
from tabcash.errors import OptimizationError
from tabcash.metrics import auc_score, get_metric, mae, mse, poisson_deviance, r2_score
from tabcash.models import PoissonGLM
from tabcash.space import apply_overrides, default_space, get_sampler
from tabcash.synthdata import GeneratorSpec, generate
from tabcash.tabular import split_dataset, write_csv

from test_metrics import (
    oracle_auc,
    oracle_mae,
    oracle_mse,
    oracle_poisson,
    oracle_r2,
)


def criterion(number, description):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            started = time.monotonic()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[criterion {number}] FAIL  {description}")
                raise
            elapsed = time.monotonic() - started
            print(f"[criterion {number}] PASS  {description}  ({elapsed:.1f}s)")

        return run

    return wrap


@criterion(1, "formula oracle suite, 1e-10 relative on 1000 random instances")
def test_criterion_1_formula_oracles():
    started = time.monotonic()
    rng = np.random.default_rng(20240801)
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        counts = rng.integers(0, 9, n).astype(float)
        rates = rng.uniform(0.05, 8.0, n)
        assert poisson_deviance(counts, rates) == pytest.approx(
            oracle_poisson(counts.tolist(), rates.tolist()), rel=1e-10
        )
        y = rng.normal(size=n)
        yhat = rng.normal(size=n)
        if np.ptp(y) > 1e-9:
            assert r2_score(y, yhat) == pytest.approx(
                oracle_r2(y.tolist(), yhat.tolist()), rel=1e-10, abs=1e-12
            )
        assert mse(y, yhat) == pytest.approx(
            oracle_mse(y.tolist(), yhat.tolist()), rel=1e-10
        )
        assert mae(y, yhat) == pytest.approx(
            oracle_mae(y.tolist(), yhat.tolist()), rel=1e-10
        )
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        probs = np.round(rng.uniform(0, 1, n), 2)
        assert auc_score(labels, probs) == pytest.approx(
            oracle_auc(labels.tolist(), probs.tolist()), rel=1e-10, abs=1e-12
        )
    assert time.monotonic() - started < 5.0


@criterion(2, "budget compliance and non-increasing incumbent over 50 random configs")
def test_criterion_2_budget_compliance():
    started = time.monotonic()
    rng = np.random.default_rng(7)
    for case in range(50):
        classification = bool(rng.integers(0, 2))
        seed = int(rng.integers(10_000))
        if classification:
            ds = generate(
                GeneratorSpec(
                    kind="imbalanced_binary",
                    n_rows=int(rng.integers(40, 120)),
                    n_features=int(rng.integers(2, 5)),
                    imbalance_ratio=float(rng.uniform(1.5, 5.0)),
                    seed=seed,
                )
            )
            objective = "accuracy"
        else:
            ds = generate(
                GeneratorSpec(
                    kind="gaussian",
                    n_rows=int(rng.integers(40, 120)),
                    n_features=int(rng.integers(2, 5)),
                    seed=seed,
                )
            )
            objective = "mse"
        max_evals = int(rng.integers(1, 7))
        tight_time = case % 10 == 0
        time_budget = 0.02 if tight_time else 60.0
        protocol = Protocol(
            mode=("none", "holdout", "kfold")[int(rng.integers(3))],
            valid_fraction=0.25,
            folds=3,
            seed=seed,
        )
        space = default_space(ds.task, y=ds.y, n_features=ds.n_features)
        try:
            result = optimize(
                ds,
                space,
                Budget(time_budget, max_evals),
                sampler=("random", "adaptive")[int(rng.integers(2))],
                metric=get_metric(objective),
                seed=seed,
                parallelism=int(rng.integers(1, 4)),
                protocol=protocol,
                trial_timeout=1e9,
            )
            history = result.history
            elapsed = result.elapsed_seconds
        except OptimizationError as exc:
            history = exc.history
            elapsed = None
        assert len(history) <= max_evals
        if elapsed is not None:
            slowest = max((t.fit_seconds for t in history), default=0.0)
            assert elapsed <= time_budget + slowest + 0.25
        losses = [v for _, v in incumbent_curve(history)]
        assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert time.monotonic() - started < 120.0


@criterion(3, "byte-identical history under identical config, seed, parallelism=1")
def test_criterion_3_determinism(tmp_path):
    started = time.monotonic()
    ds = generate(GeneratorSpec(kind="gaussian", n_rows=80, n_features=3, seed=5))
    space = default_space(ds.task, y=ds.y, n_features=3)
    blobs = []
    for run in range(2):
        result = optimize(
            ds,
            space,
            Budget(60.0, 8),
            sampler="adaptive",
            metric=get_metric("mse"),
            seed=42,
            parallelism=1,
        )
        out = tmp_path / f"engine_run{run}"
        persist_history(result.history, out, best=result.best)
        blobs.append((out / "history.jsonl").read_bytes())
    assert blobs[0] == blobs[1]

    # and through the CLI surface
    write_csv(ds, tmp_path / "train.csv")
    cli_blobs = []
    for run in range(2):
        config = {
            "model_name": f"det{run}",
            "data_path": str(tmp_path / "train.csv"),
            "response_column": "response",
            "objective": "mse",
            "max_evals": 6,
            "timeout": 60.0,
            "validation": "holdout",
            "valid_size": 0.25,
            "search_algo": "random",
            "task": "regression",
            "seed": 13,
            "parallelism": 1,
            "output_dir": str(tmp_path / "runs"),
        }
        cfg_path = tmp_path / f"det{run}.json"
        cfg_path.write_text(json.dumps(config))
        assert main(["fit", "--config", str(cfg_path)]) == 0
        cli_blobs.append(
            (tmp_path / "runs" / f"det{run}" / "history.jsonl").read_bytes()
        )
    assert cli_blobs[0] == cli_blobs[1]
    assert time.monotonic() - started < 60.0


@criterion(4, "balancing geometry: post-ratio, SMOTE convexity, Tomek mutual pairs")
def test_criterion_4_balancing_geometry():
    from test_balance import brute_force_tomek_majority

    started = time.monotonic()
    ds = generate(
        GeneratorSpec(
            kind="imbalanced_binary",
            n_rows=400,
            n_features=3,
            imbalance_ratio=9.0,
            noise_scale=1.5,
            seed=17,
        )
    )
    X = ds.X.astype(float)
    y = np.asarray(ds.y)
    for method in ("random_over", "random_under", "smote"):
        Xb, yb = Balancer(method, ratio=1.0, k=5).fit_resample(X, y, seed=3)
        prof = profile(yb)
        assert abs(prof.majority_count - prof.minority_count) <= 1, method

    # every synthetic row is a convex combination of two minority rows
    Xs, ys = Balancer("smote", ratio=1.0, k=5).fit_resample(X, y, seed=3)
    minority = X[y == 1]
    synthetic = Xs[len(X):]
    assert len(synthetic) > 0
    for s in synthetic:
        found = False
        for i in range(len(minority)):
            d = minority - minority[i]
            denom = (d * d).sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                u = ((s - minority[i]) * d).sum(axis=1) / np.where(denom > 0, denom, 1)
            recon = minority[i] + u[:, None] * d
            close = np.abs(recon - s).max(axis=1) < 1e-9
            in_range = (u >= -1e-9) & (u <= 1 + 1e-9) & (denom > 0)
            if (close & in_range).any() or (denom == 0).any() and np.abs(minority[i] - s).max() < 1e-9:
                found = True
                break
        assert found

    small = generate(
        GeneratorSpec(
            kind="imbalanced_binary",
            n_rows=60,
            n_features=2,
            imbalance_ratio=4.0,
            noise_scale=2.0,
            seed=23,
        )
    )
    Xt = small.X.astype(float)
    yt = np.asarray(small.y)
    Xb, yb = Balancer("tomek", ratio=1.0).fit_resample(Xt, yt, seed=0)
    removed = brute_force_tomek_majority(Xt, yt, majority_class=0)
    kept = [i for i in range(len(Xt)) if i not in removed]
    assert np.array_equal(Xb, Xt[kept])
    assert time.monotonic() - started < 30.0


@criterion(5, "ensemble identities: stacking H=1, boosting sum, soft stochastic, bagging masks")
def test_criterion_5_ensemble_identities():
    started = time.monotonic()
    reg = generate(GeneratorSpec(kind="gaussian", n_rows=90, n_features=4, seed=29))
    cls = generate(
        GeneratorSpec(
            kind="imbalanced_binary", n_rows=90, n_features=4, imbalance_ratio=2.0, seed=31
        )
    )
    reg_space = default_space(reg.task, y=reg.y, n_features=4)
    cls_space = default_space(cls.task, n_features=4)

    reg_result = optimize(
        reg, reg_space, Budget(120.0, 8), "random", get_metric("mse"), seed=37
    )
    for voting in ("mean", "median", "max"):
        single = build_stacking(reg_result.history, 1, voting=voting)
        assert np.array_equal(single.predict(reg.X), reg_result.best.predict(reg.X))
    cls_result = optimize(
        cls, cls_space, Budget(120.0, 8), "random", get_metric("auc"), seed=37
    )
    for voting in ("soft", "hard"):
        single = build_stacking(cls_result.history, 1, voting=voting)
        assert np.array_equal(single.predict(cls.X), cls_result.best.predict(cls.X))

    boosted, _ = build_boosting(
        reg, reg_space, Budget(120.0, 6), get_sampler("random"), get_metric("mse"),
        n_members=3, seed=41,
    )
    member_sum = np.sum([m.pipeline.predict(reg.X) for m in boosted.members], axis=0)
    assert np.array_equal(boosted.predict(reg.X), member_sum)

    soft = build_stacking(cls_result.history, 3, voting="soft")
    aggregate = soft.predict_bundle(cls.X).probabilities
    assert aggregate.min() >= 0 and aggregate.max() <= 1
    assert aggregate.sum(axis=1) == pytest.approx(np.ones(cls.n_rows), abs=1e-9)

    bagged, _ = build_bagging(
        reg, reg_space, Budget(120.0, 6), get_sampler("random"), get_metric("mse"),
        n_members=2, feature_fraction=0.5, seed=43,
    )
    for member in bagged.members:
        dropped = [j for j, keep in enumerate(member.mask.mask) if not keep]
        assert dropped
        X_perturbed = reg.X.copy()
        for j in dropped:
            X_perturbed[:, j] = 9e9
        masked = member.mask.as_bool()
        assert np.array_equal(
            member.pipeline.predict(reg.X[:, masked]),
            member.pipeline.predict(X_perturbed[:, masked]),
        )
    assert time.monotonic() - started < 120.0


def _run_fit_and_glm(tmp_path, seed):
    ds = generate(GeneratorSpec(kind="poisson", n_rows=5000, n_features=8, seed=seed))
    split = split_dataset(ds, test_fraction=0.2, valid_fraction=0.0, seed=seed)
    write_csv(ds.take_rows(split.train_indices), tmp_path / f"train{seed}.csv")
    write_csv(ds.take_rows(split.test_indices), tmp_path / f"test{seed}.csv")
    config = {
        "model_name": f"pois{seed}",
        "data_path": str(tmp_path / f"train{seed}.csv"),
        "response_column": "response",
        "test_path": str(tmp_path / f"test{seed}.csv"),
        "objective": "poisson_deviance",
        "max_evals": 32,
        "timeout": 600.0,
        "validation": "holdout",
        "valid_size": 0.2,
        "search_algo": "random",
        "task": "regression",
        "seed": seed,
        "parallelism": 1,
        "output_dir": str(tmp_path / "runs"),
    }
    cfg_path = tmp_path / f"pois{seed}.json"
    cfg_path.write_text(json.dumps(config))
    assert main(["fit", "--config", str(cfg_path)]) == 0
    assert main(["glm-baseline", "--config", str(cfg_path)]) == 0
    fit_report = json.loads(
        (tmp_path / "runs" / f"pois{seed}" / "report.json").read_text()
    )
    glm_report = json.loads(
        (tmp_path / "runs" / f"pois{seed}_glm" / "report.json").read_text()
    )
    return (
        fit_report["test"]["poisson_deviance"],
        glm_report["test"]["poisson_deviance"],
    )


@criterion(6, "search matches the count-GLM baseline within 5% on >= 4 of 5 seeds")
def test_criterion_6_glm_beat_or_match(tmp_path):
    started = time.monotonic()
    wins = 0
    for seed in range(5):
        automl, glm = _run_fit_and_glm(tmp_path, seed)
        if automl <= 1.05 * glm:
            wins += 1
    assert wins >= 4, f"only {wins} of 5 seeds within 1.05x of the GLM baseline"
    assert time.monotonic() - started < 900.0


@criterion(7, "balancing-enabled search reaches at least the no-balancing AUC (5-seed mean)")
def test_criterion_7_imbalanced_auc_benchmark():
    started = time.monotonic()
    metric = get_metric("auc")
    balanced, unbalanced = [], []
    for seed in range(5):
        ds = generate(
            GeneratorSpec(
                kind="imbalanced_binary",
                n_rows=5000,
                n_features=6,
                imbalance_ratio=19.0,
                noise_scale=1.5,
                seed=seed,
            )
        )
        split = split_dataset(ds, test_fraction=0.2, valid_fraction=0.0, seed=seed)
        train = ds.take_rows(split.train_indices)
        test = ds.take_rows(split.test_indices)
        space = default_space(train.task, n_features=train.n_features)
        space_none = apply_overrides(space, {"balance": {"methods": ["none"]}})
        protocol = Protocol(mode="holdout", valid_fraction=0.2, seed=seed)
        for tag, sp, sink in (
            ("balanced", space, balanced),
            ("none", space_none, unbalanced),
        ):
            result = optimize(
                train, sp, Budget(600.0, 32), "random", metric, seed=seed,
                protocol=protocol,
            )
            bundle = result.best.predict_bundle(test.X)
            sink.append(auc_score(test.y, bundle.probabilities[:, 1]))
    assert np.mean(balanced) >= np.mean(unbalanced), (
        f"balanced mean {np.mean(balanced):.4f} below none mean {np.mean(unbalanced):.4f}"
    )
    assert time.monotonic() - started < 900.0


@criterion(8, "count GLM recovers ln(mean) to 1e-8 and offset coefficients to 1e-4")
def test_criterion_8_poisson_glm_unit():
    m = PoissonGLM().fit(np.empty((4, 0)), [0.0, 1.0, 2.0, 3.0])
    assert abs(m.coef_[0] - math.log(1.5)) < 1e-8

    rng = np.random.default_rng(53)
    n, w = 300, 4
    X = rng.normal(size=(n, w))
    beta = np.array([0.5, -0.25, 0.15, 0.3])
    intercept = 0.4
    counts = rng.integers(1, 12, n).astype(float)
    offset = np.log(counts) - intercept - X @ beta
    fitted = PoissonGLM().fit(X, counts, offset=offset)
    assert abs(fitted.coef_[0] - intercept) < 1e-4
    assert np.abs(fitted.coef_[1:] - beta).max() < 1e-4
