"""Hyperparameter tuning: NSGA-II over (log10 C, log10 gamma) for the OvR SVM.

Each candidate genome decodes to (C, gamma), trains an eight-class
one-vs-rest model on the fit portion of the training split, and is scored by
(-accuracy, rest false negatives) on the evaluation set -- by default a 20%
stratified hold-out of the training data, optionally TS2 to replicate the
original protocol. After the run, the accuracy-dominant and FN-dominant
members of the final front are retrained on the full training split and
evaluated on TS1 and TS2.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import metrics, svm
from .data import DatasetSplit, MovementClass
from .features import FeatureVector
from .nsga2 import (Bounds, EvolutionConfig, Individual, OperatorParams, evolve)


class SolutionTag(Enum):
    ACCURACY_DOMINANT = "accuracy_dominant"
    FN_DOMINANT = "fn_dominant"
    OTHER = "other"


@dataclass
class SearchSpace:
    log10_c: tuple[float, float] = (-2.0, 4.0)
    log10_gamma: tuple[float, float] = (-5.0, 2.0)

    def __post_init__(self) -> None:
        for name, (lo, hi) in (("log10_c", self.log10_c), ("log10_gamma", self.log10_gamma)):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} interval must be finite with lower < upper")

    def bounds(self) -> Bounds:
        return Bounds(lower=np.array([self.log10_c[0], self.log10_gamma[0]]),
                      upper=np.array([self.log10_c[1], self.log10_gamma[1]]))

    def contains(self, genome: np.ndarray) -> bool:
        return self.bounds().contains(np.asarray(genome, dtype=np.float64))


@dataclass
class TuneConfig:
    population: int = 98
    generations: int = 10
    operators: OperatorParams = field(default_factory=OperatorParams)
    holdout_fraction: float = 0.2
    objective_set: str = "holdout"  # "holdout" | "ts2"
    svm_tol: float = 1e-3

    def __post_init__(self) -> None:
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ValueError("holdout_fraction must be in (0, 1)")
        if self.objective_set not in ("holdout", "ts2"):
            raise ValueError(f"objective_set must be 'holdout' or 'ts2', got {self.objective_set!r}")


@dataclass
class FeatureArrays:
    """Matrix view of a feature collection: X [n, D] plus class labels."""

    X: np.ndarray
    y: list[MovementClass]

    @classmethod
    def from_vectors(cls, items: Sequence[FeatureVector]) -> "FeatureArrays":
        if not items:
            raise ValueError("empty feature collection")
        X = np.stack([fv.values for fv in items])
        y = [fv.class_label for fv in items]
        return cls(X=X, y=y)

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class FrontSolution:
    genome: tuple[float, float]  # (log10 C, log10 gamma)
    hyperparams: svm.SvmHyperparams
    accuracy: float
    rest_fn: int
    rank: int
    crowding: float
    tags: tuple[SolutionTag, ...] = (SolutionTag.OTHER,)


@dataclass
class SetEvaluation:
    confusion: metrics.ConfusionMatrix
    accuracy: float
    rest_fn: int
    rest_fn_rate: float
    rest_recall: float

    @classmethod
    def from_confusion(cls, cm: metrics.ConfusionMatrix) -> "SetEvaluation":
        return cls(confusion=cm,
                   accuracy=metrics.accuracy(cm),
                   rest_fn=metrics.rest_fn(cm),
                   rest_fn_rate=metrics.rest_fn_rate(cm),
                   rest_recall=metrics.rest_recall(cm))


@dataclass
class ExtremeSolution:
    tag: SolutionTag
    solution: FrontSolution
    evaluations: dict[str, SetEvaluation]  # keys: validation, ts1, ts2


@dataclass
class TuneReport:
    subject_id: int
    seed: int
    config: TuneConfig
    space: SearchSpace
    generation_fronts: list[list[FrontSolution]]
    extremes: list[ExtremeSolution]
    n_evaluations: int
    wall_time_s: float  # measured; excluded from the deterministic report file


def hold_out_split(train_features: Sequence[FeatureVector], fraction: float,
                   seed: int) -> tuple[list[FeatureVector], list[FeatureVector]]:
    """Stratified fit/validation split; per-class counts within one sample of
    the requested fraction, allocation by largest remainder."""
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    by_class: dict[MovementClass, list[FeatureVector]] = {}
    for fv in sorted(train_features, key=lambda f: f.identity):
        by_class.setdefault(fv.class_label, []).append(fv)
    for cls, pool in by_class.items():
        if len(pool) < 2:
            raise ValueError(f"class {cls.name} has fewer than 2 samples")
    classes = sorted(by_class, key=lambda c: c.value)
    targets = {cls: fraction * len(by_class[cls]) for cls in classes}
    counts = {cls: int(np.floor(targets[cls])) for cls in classes}
    leftover = int(round(sum(targets.values()))) - sum(counts.values())
    by_remainder = sorted(classes, key=lambda c: (-(targets[c] - counts[c]), c.value))
    for cls in by_remainder[:max(leftover, 0)]:
        counts[cls] += 1
    fit: list[FeatureVector] = []
    val: list[FeatureVector] = []
    for cls in classes:
        pool = by_class[cls]
        n_val = min(max(counts[cls], 1), len(pool) - 1)
        rng = np.random.default_rng([seed, 21, cls.index])
        chosen = set(rng.choice(len(pool), size=n_val, replace=False).tolist())
        for i, fv in enumerate(pool):
            (val if i in chosen else fit).append(fv)
    return fit, val


def decode_genome(genome: np.ndarray) -> svm.SvmHyperparams:
    g = np.asarray(genome, dtype=np.float64)
    return svm.SvmHyperparams(c=float(10.0 ** g[0]), gamma=float(10.0 ** g[1]))


def objective_eval(genome: np.ndarray, fit_set: FeatureArrays,
                   eval_set: FeatureArrays, tol: float = 1e-3) -> tuple[float, float]:
    """(-accuracy, rest_fn) of the OvR model trained at the decoded hyperparams."""
    hp = decode_genome(genome)
    model = svm.train_ovr(fit_set.X, fit_set.y, hp, tol=tol)
    cm = metrics.confusion(svm.predict_batch(model, eval_set.X), eval_set.y)
    return (-metrics.accuracy(cm), float(metrics.rest_fn(cm)))


def select_extremes(front: Sequence[FrontSolution]) -> tuple[FrontSolution, FrontSolution]:
    """Accuracy-dominant and FN-dominant members; ties broken by the other
    objective, then lexicographic genome order."""
    if not front:
        raise ValueError("empty front")
    acc_dom = sorted(front, key=lambda s: (-s.accuracy, s.rest_fn, s.genome))[0]
    fn_dom = sorted(front, key=lambda s: (s.rest_fn, -s.accuracy, s.genome))[0]
    return acc_dom, fn_dom


def _front_solutions(snapshot: Sequence[Individual]) -> list[FrontSolution]:
    out = []
    for ind in snapshot:
        out.append(FrontSolution(
            genome=(float(ind.genome[0]), float(ind.genome[1])),
            hyperparams=decode_genome(ind.genome),
            accuracy=float(-ind.objectives[0]),
            rest_fn=int(round(ind.objectives[1])),
            rank=int(ind.rank),
            crowding=float(ind.crowding),
        ))
    return out


FRONT_CSV_HEADER = ["log10_c", "log10_gamma", "accuracy", "rest_fn", "rank", "crowding"]


def write_front_csv(solutions: Sequence[FrontSolution], path: str) -> None:
    lines = [",".join(FRONT_CSV_HEADER)]
    for s in solutions:
        lines.append(",".join([repr(s.genome[0]), repr(s.genome[1]),
                               repr(s.accuracy), str(s.rest_fn),
                               str(s.rank), repr(s.crowding)]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def run_tuning(dataset: DatasetSplit, config: TuneConfig, space: SearchSpace,
               seed: int, out_dir: str | None = None, jobs: int = 1,
               subject_id: int | None = None) -> TuneReport:
    """Full tuning pass over one subject's split; writes incremental front
    dumps when ``out_dir`` is given, so completed generations survive an
    aborted run."""
    t0 = time.perf_counter()
    if subject_id is None:
        subjects = {fv.subject_id for fv in dataset.train}
        if len(subjects) != 1:
            raise ValueError(
                f"dataset spans subjects {sorted(subjects)}; tuning is per-subject")
        subject_id = subjects.pop()

    train_arrays = FeatureArrays.from_vectors(dataset.train)
    ts1_arrays = FeatureArrays.from_vectors(dataset.ts1)
    ts2_arrays = FeatureArrays.from_vectors(dataset.ts2)
    if config.objective_set == "holdout":
        fit_items, val_items = hold_out_split(dataset.train, config.holdout_fraction, seed)
        fit_arrays = FeatureArrays.from_vectors(fit_items)
        eval_arrays = FeatureArrays.from_vectors(val_items)
    else:
        fit_arrays = train_arrays
        eval_arrays = ts2_arrays

    fronts_dir = None
    if out_dir is not None:
        fronts_dir = os.path.join(out_dir, "fronts")
        os.makedirs(fronts_dir, exist_ok=True)

    def on_generation(gen: int, snapshot: list[Individual]) -> None:
        if fronts_dir is not None:
            write_front_csv(_front_solutions(snapshot),
                            os.path.join(fronts_dir, f"generation_{gen:03d}.csv"))

    evo_config = EvolutionConfig(population_size=config.population,
                                 generations=config.generations,
                                 seed=seed, operators=config.operators)
    result = evolve(
        lambda genome: objective_eval(genome, fit_arrays, eval_arrays, tol=config.svm_tol),
        evo_config, space.bounds(), on_generation=on_generation, jobs=jobs)

    generation_fronts = [_front_solutions(snapshot) for snapshot in result.front_history]
    final_front = generation_fronts[-1]
    acc_dom, fn_dom = select_extremes(final_front)
    acc_dom.tags = (SolutionTag.ACCURACY_DOMINANT,)
    if fn_dom is acc_dom:
        acc_dom.tags = (SolutionTag.ACCURACY_DOMINANT, SolutionTag.FN_DOMINANT)
    else:
        fn_dom.tags = (SolutionTag.FN_DOMINANT,)

    extremes = []
    for tag, sol in ((SolutionTag.ACCURACY_DOMINANT, acc_dom),
                     (SolutionTag.FN_DOMINANT, fn_dom)):
        stage1 = svm.train_ovr(fit_arrays.X, fit_arrays.y, sol.hyperparams,
                               tol=config.svm_tol)
        val_cm = metrics.confusion(svm.predict_batch(stage1, eval_arrays.X),
                                   eval_arrays.y)
        final = svm.train_ovr(train_arrays.X, train_arrays.y, sol.hyperparams,
                              tol=config.svm_tol)
        ts1_cm = metrics.confusion(svm.predict_batch(final, ts1_arrays.X), ts1_arrays.y)
        ts2_cm = metrics.confusion(svm.predict_batch(final, ts2_arrays.X), ts2_arrays.y)
        extremes.append(ExtremeSolution(
            tag=tag, solution=sol,
            evaluations={"validation": SetEvaluation.from_confusion(val_cm),
                         "ts1": SetEvaluation.from_confusion(ts1_cm),
                         "ts2": SetEvaluation.from_confusion(ts2_cm)}))

    report = TuneReport(subject_id=subject_id, seed=seed, config=config, space=space,
                        generation_fronts=generation_fronts, extremes=extremes,
                        n_evaluations=result.n_evaluations,
                        wall_time_s=time.perf_counter() - t0)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def report_to_dict(report: TuneReport) -> dict:
    """Deterministic document for report.json; wall time is deliberately left
    to the run manifest so identical (data, config, seed) runs serialize
    byte-identically."""

    def sol(s: FrontSolution) -> dict:
        return {"log10_c": s.genome[0], "log10_gamma": s.genome[1],
                "c": s.hyperparams.c, "gamma": s.hyperparams.gamma,
                "accuracy": s.accuracy, "rest_fn": s.rest_fn,
                "rank": s.rank, "crowding": _json_float(s.crowding),
                "tags": sorted(t.value for t in s.tags)}

    def set_eval(ev: SetEvaluation) -> dict:
        return {"accuracy": ev.accuracy, "rest_fn": ev.rest_fn,
                "rest_fn_rate": ev.rest_fn_rate, "rest_recall": ev.rest_recall,
                "confusion": ev.confusion.counts.tolist()}

    return {
        "subject": report.subject_id,
        "seed": report.seed,
        "config": {
            "population": report.config.population,
            "generations": report.config.generations,
            "crossover_prob": report.config.operators.pc,
            "eta_c": report.config.operators.eta_c,
            "mutation_prob": report.config.operators.pm,
            "eta_m": report.config.operators.eta_m,
            "holdout_fraction": report.config.holdout_fraction,
            "objective_set": report.config.objective_set,
            "svm_tol": report.config.svm_tol,
        },
        "search_space": {"log10_c": list(report.space.log10_c),
                         "log10_gamma": list(report.space.log10_gamma)},
        "n_evaluations": report.n_evaluations,
        "generation_fronts": [[sol(s) for s in front]
                              for front in report.generation_fronts],
        "extremes": {ex.tag.value: {"solution": sol(ex.solution),
                                    "evaluations": {k: set_eval(v)
                                                    for k, v in ex.evaluations.items()}}
                     for ex in report.extremes},
    }


def _json_float(v: float) -> float | str:
    return "inf" if np.isinf(v) else float(v)


def write_report(report: TuneReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=1)
        fh.write("\n")
    for ex in report.extremes:
        for set_name, ev in ex.evaluations.items():
            ev.confusion.to_csv(os.path.join(
                out_dir, f"confusion_{ex.tag.value}_{set_name}.csv"))


def load_report_dict(run_dir: str) -> dict:
    with open(os.path.join(run_dir, "report.json")) as fh:
        return json.load(fh)
