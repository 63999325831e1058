"""Experiment harness: cross-subject folds, adaptation curves, reports.

Every experiment is deterministic given (dataset, hyperparams, seed); fold
rng streams depend only on the seed, so permuting subject order cannot
change any per-subject result.  Reports serialize to a canonical JSON
metrics file plus one confusion CSV per fold, byte-stable across reruns.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .data import Dataset, audit_disjoint, split_adaptation, split_cross_subject
from .models import CnnConfig, Hyperparams, TrainedModel, train


class VocabularyMismatchError(ValueError):
    """Model and dataset disagree on the class vocabulary."""


@dataclass
class EvalReport:
    """One fold's outcome: accuracy plus the full confusion matrix."""

    test_subject: str
    accuracy: float
    confusion: np.ndarray  # (C, C) counts, rows true, cols predicted
    n_samples: int

    @property
    def per_class_accuracy(self) -> np.ndarray:
        totals = self.confusion.sum(axis=1)
        safe = np.where(totals == 0, 1, totals)
        return np.where(totals == 0, 0.0, np.diag(self.confusion) / safe)

    def validate(self) -> None:
        if int(self.confusion.sum()) != self.n_samples:
            raise ValueError("confusion matrix does not account for every sample")
        trace_acc = float(np.trace(self.confusion)) / self.n_samples
        if abs(trace_acc - self.accuracy) > 1e-12:
            raise ValueError("stored accuracy disagrees with the confusion trace")

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            self.test_subject == other.test_subject
            and self.accuracy == other.accuracy
            and self.n_samples == other.n_samples
            and np.array_equal(self.confusion, other.confusion)
        )


@dataclass
class ExperimentResult:
    """Per-subject reports plus their equal-weight mean and population std."""

    experiment: str
    model: str
    hyperparams: dict
    reports: List[EvalReport]
    mean_accuracy: float
    std_accuracy: float
    seed: int

    @classmethod
    def from_reports(cls, experiment: str, model: str, hyperparams: dict,
                     reports: Sequence[EvalReport], seed: int) -> "ExperimentResult":
        accs = np.array([r.accuracy for r in reports], dtype=np.float64)
        return cls(
            experiment=experiment,
            model=model,
            hyperparams=dict(hyperparams),
            reports=list(reports),
            mean_accuracy=float(accs.mean()),
            std_accuracy=float(accs.std()),
            seed=seed,
        )

    def validate(self) -> None:
        for r in self.reports:
            r.validate()
        accs = np.array([r.accuracy for r in self.reports], dtype=np.float64)
        if abs(float(accs.mean()) - self.mean_accuracy) > 1e-12:
            raise ValueError("stored mean disagrees with per-fold accuracies")
        if abs(float(accs.std()) - self.std_accuracy) > 1e-12:
            raise ValueError("stored std disagrees with per-fold accuracies")


def evaluate(model: TrainedModel, test: Dataset) -> EvalReport:
    """Deterministic inference pass over one test set."""
    if not test.samples:
        raise ValueError("empty test set")
    if list(model.vocabulary) != list(test.vocabulary):
        raise VocabularyMismatchError(
            f"model vocabulary ({len(model.vocabulary)} classes) does not match "
            f"dataset vocabulary ({len(test.vocabulary)} classes)"
        )
    subjects = {s.subject_id for s in test.samples}
    subject = subjects.pop() if len(subjects) == 1 else "+".join(sorted(subjects))
    inputs = model.prepare(test.samples)
    preds = model.predict(inputs)
    c = model.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    for s, p in zip(test.samples, preds):
        confusion[s.class_label, int(p)] += 1
    n = len(test.samples)
    report = EvalReport(
        test_subject=subject,
        accuracy=float(np.trace(confusion)) / n,
        confusion=confusion,
        n_samples=n,
    )
    report.validate()
    return report


def predictions_report(test: Dataset, preds: np.ndarray, num_classes: int,
                       subject: str) -> EvalReport:
    """Build a report from externally computed predictions (fused scores etc.)."""
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for s, p in zip(test.samples, preds):
        confusion[s.class_label, int(p)] += 1
    n = len(test.samples)
    return EvalReport(
        test_subject=subject,
        accuracy=float(np.trace(confusion)) / n,
        confusion=confusion,
        n_samples=n,
    )


def _run_fold(args) -> EvalReport:
    dataset, subject, arch, hp, cnn_config = args
    train_d, test_d = split_cross_subject(dataset, subject)
    audit_disjoint(train_d, test_d)
    model = train(arch, train_d, hp, cnn_config)
    return evaluate(model, test_d)


def cross_subject_experiment(
    dataset: Dataset,
    arch: str,
    hp: Optional[Hyperparams] = None,
    cnn_config: Optional[CnnConfig] = None,
    jobs: int = 1,
    out_dir=None,
    log: Optional[Callable[[str], None]] = None,
    experiment: str = "cross-subject",
) -> ExperimentResult:
    """Hold out every subject in turn: split, audit, train fresh, evaluate.

    With ``out_dir`` set, reports are rewritten after each completed fold,
    so a failing fold leaves the finished ones on disk.
    """
    if len(dataset.subjects) < 2:
        raise ValueError("cross-subject evaluation needs at least 2 subjects")
    if hp is None:
        hp = Hyperparams()
    subjects = list(dataset.subjects)
    fold_args = [(dataset, s, arch, hp, cnn_config) for s in subjects]
    reports: List[EvalReport] = []

    def partial() -> ExperimentResult:
        return ExperimentResult.from_reports(experiment, arch, hp.to_dict(), reports, hp.seed)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for report in pool.map(_run_fold, fold_args):
                reports.append(report)
                if log:
                    log(f"fold {report.test_subject}: accuracy {report.accuracy:.4f}")
                if out_dir is not None:
                    write_reports(partial(), out_dir)
    else:
        for args in fold_args:
            report = _run_fold(args)
            reports.append(report)
            if log:
                log(f"fold {report.test_subject}: accuracy {report.accuracy:.4f}")
            if out_dir is not None:
                write_reports(partial(), out_dir)
    return partial()


def adaptation_curve(
    dataset: Dataset,
    subject: str,
    fractions: Sequence[float],
    arch: str,
    hp: Optional[Hyperparams] = None,
    cnn_config: Optional[CnnConfig] = None,
    log: Optional[Callable[[str], None]] = None,
) -> List[Tuple[float, float]]:
    """Accuracy on a fixed held-out half while train data from the test
    subject grows from nothing to the other half."""
    fractions = list(fractions)
    if any(not 0.0 <= f <= 0.5 for f in fractions):
        raise ValueError("fractions must lie in [0, 0.5]")
    if sorted(fractions) != fractions:
        raise ValueError("fractions must be sorted ascending")
    if hp is None:
        hp = Hyperparams()
    curve: List[Tuple[float, float]] = []
    test_identity = None
    for fraction in fractions:
        train_d, test_d = split_adaptation(dataset, subject, fraction, hp.seed)
        audit_disjoint(train_d, test_d)
        ids = [s.identity for s in test_d.samples]
        if test_identity is None:
            test_identity = ids
        elif ids != test_identity:
            raise AssertionError("held-out half changed across fractions")
        model = train(arch, train_d, hp, cnn_config)
        report = evaluate(model, test_d)
        curve.append((fraction, report.accuracy))
        if log:
            log(f"fraction {fraction:.2f}: accuracy {report.accuracy:.4f}")
    return curve


def export_embeddings(model: TrainedModel, dataset: Dataset, path=None):
    """Concatenated final LSTM states per sample, optionally written as CSV.

    Returns (embeddings N x 3S, labels, subjects).  The CSV has columns
    subject, label, e000..; values print at full round-trip precision.
    """
    if list(model.vocabulary) != list(dataset.vocabulary):
        raise VocabularyMismatchError("model and dataset vocabularies differ")
    inputs = model.prepare(dataset.samples)
    emb = model.embed(inputs)
    labels = np.array([s.class_label for s in dataset.samples], dtype=np.int64)
    subjects = [s.subject_id for s in dataset.samples]
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "label"] + [f"e{i:03d}" for i in range(emb.shape[1])])
            for subj, lab, row in zip(subjects, labels, emb):
                w.writerow([subj, int(lab)] + [repr(float(v)) for v in row])
    return emb, labels, subjects


def _metrics_dict(result: ExperimentResult) -> dict:
    return {
        "experiment": result.experiment,
        "model": result.model,
        "hyperparams": result.hyperparams,
        "folds": [
            {"subject": r.test_subject, "accuracy": r.accuracy, "n": r.n_samples}
            for r in result.reports
        ],
        "mean_accuracy": result.mean_accuracy,
        "std_accuracy": result.std_accuracy,
        "seed": result.seed,
    }


def write_reports(result: ExperimentResult, out_dir, class_names: Optional[List[str]] = None) -> List[Path]:
    """Write metrics.json plus one confusion CSV per fold; returns the paths.

    Output is canonical (sorted keys, fixed separators, repr floats), so
    identical results produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "metrics.json"]
    paths[0].write_text(
        json.dumps(_metrics_dict(result), sort_keys=True, separators=(",", ":")) + "\n"
    )
    for r in result.reports:
        c = r.confusion.shape[0]
        names = class_names if class_names is not None else [f"class_{i:03d}" for i in range(c)]
        if len(names) != c:
            raise ValueError("class name count does not match confusion size")
        path = out / f"confusion_{r.test_subject}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in r.confusion:
                w.writerow([int(v) for v in row])
        paths.append(path)
    return paths


def read_reports(out_dir) -> ExperimentResult:
    """Inverse of write_reports (metrics.json plus the confusion CSVs)."""
    out = Path(out_dir)
    meta = json.loads((out / "metrics.json").read_text())
    reports = []
    for fold in meta["folds"]:
        path = out / f"confusion_{fold['subject']}.csv"
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        confusion = np.array([[int(v) for v in row] for row in rows[1:]], dtype=np.int64)
        reports.append(
            EvalReport(
                test_subject=fold["subject"],
                accuracy=fold["accuracy"],
                confusion=confusion,
                n_samples=fold["n"],
            )
        )
    return ExperimentResult(
        experiment=meta["experiment"],
        model=meta["model"],
        hyperparams=meta["hyperparams"],
        reports=reports,
        mean_accuracy=meta["mean_accuracy"],
        std_accuracy=meta["std_accuracy"],
        seed=meta["seed"],
    )


def pairwise_accuracy(reports: Sequence[EvalReport], classes: Sequence[int]) -> float:
    """Accuracy restricted to samples whose true class is in ``classes``,
    pooled over the given folds."""
    classes = list(classes)
    correct = 0
    total = 0
    for r in reports:
        sub = r.confusion[classes, :]
        correct += int(sub[np.arange(len(classes)), classes].sum())
        total += int(sub.sum())
    if total == 0:
        raise ValueError("no samples of the requested classes in these folds")
    return correct / total
