"""The asymptotic-validity training loop.

Each iteration trains a surrogate on the database and scores it on a fixed
held-out test set.  An invalid surrogate is retrained with a hyperparameter
search; the better of the two is saved if it beats the best score so far.
A test-valid surrogate only counts toward convergence: the loop stops after
``window`` consecutive valid iterations whose score changed by less than
``rel_change`` relative to the previous iteration.  Whenever the loop does
not stop, the sampler adds new truth evaluations to the database.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import ScaleBridgeError
from ..surrogates.metrics import average_model_error

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidityConfig:
    tol: float
    window: int = 3
    rel_change: float = 0.05
    batch: int = 20               # sampler evaluations per sampling iteration
    max_iterations: int = 100
    initial_batch: int | None = None

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("convergence window must be at least 1")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.batch < 1:
            raise ValueError("sampler batch must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    db_size: int
    test_score: float
    saved: bool
    evals: int


@dataclass
class ValidityHistory:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.test_score for r in self.records])

    def non_increasing_fraction(self) -> float:
        s = self.scores[np.isfinite(self.scores)]
        if len(s) < 2:
            return 1.0
        return float(np.mean(np.diff(s) <= 0))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "db_size", "test_score", "saved", "evals"])
        for r in self.records:
            w.writerow([r.iteration, r.db_size, repr(float(r.test_score)), int(r.saved), r.evals])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class ValidityResult:
    surrogate: object
    history: ValidityHistory
    converged: bool
    test_score: float
    X: np.ndarray
    Y: np.ndarray


def _relative_change(new: float, old: float) -> float:
    if new == old:
        return 0.0
    return abs(new - old) / max(abs(old), 1e-300)


def validity_loop(truth, trainer, sampler, vcfg: ValidityConfig, test_X, test_y=None,
                  initial=None, seed: int = 0) -> ValidityResult:
    """Train, test and sample until surrogate validity converges.

    ``trainer(X, Y, seed)`` fits a surrogate; if it also has
    ``tuned(X, Y, seed)`` returning ``(surrogate, param, scores)`` that is
    used for the retraining step.  ``sampler(n, seed, existing)`` returns new
    evaluated :class:`SamplePoint` records.
    """
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    if test_y is None:
        test_y = truth.evaluate_many(test_X)
    test_y = np.asarray(test_y, dtype=float).reshape(len(test_X), -1)
    d = test_X.shape[1]
    if initial is not None:
        X = np.asarray(initial[0], dtype=float).reshape(-1, d)
        Y = np.asarray(initial[1], dtype=float).reshape(len(X), -1)
    else:
        X = np.empty((0, d))
        Y = np.empty((0, test_y.shape[1]))

    history = ValidityHistory()
    best_model, best_score = None, np.inf
    last_valid_score = None
    streak = 0
    model, score = None, np.inf

    def sample(n: int, it: int) -> int:
        nonlocal X, Y
        pts = sampler(n, seed + it, X)
        if pts:
            X = np.vstack([X, np.array([p.x for p in pts])])
            Y = np.vstack([Y, np.array([p.y for p in pts]).reshape(len(pts), -1)])
        return len(pts)

    for it in range(vcfg.max_iterations):
        db_size = len(X)
        model, score, saved = None, np.inf, False
        if db_size:
            try:
                model = trainer(X, Y, seed)
                score = average_model_error(model, None, test_X, test_y)
            except ScaleBridgeError as exc:
                log.debug("training failed at iteration %d: %s", it, exc)
            if score > vcfg.tol and hasattr(trainer, "tuned"):
                try:
                    tuned, _, _ = trainer.tuned(X, Y, seed)
                    tscore = average_model_error(tuned, None, test_X, test_y)
                    if tscore < score:
                        model, score = tuned, tscore
                except ScaleBridgeError as exc:
                    log.debug("tuned retraining failed at iteration %d: %s", it, exc)
            if model is not None and score < best_score:
                best_model, best_score, saved = model, score, True

        if model is not None and score <= vcfg.tol:
            if last_valid_score is None or _relative_change(score, last_valid_score) < vcfg.rel_change:
                streak += 1
            else:
                streak = 1
            last_valid_score = score
            if streak >= vcfg.window:
                history.records.append(IterationRecord(it, db_size, score, saved, 0))
                return ValidityResult(model, history, True, score, X, Y)
        else:
            streak = 0
            last_valid_score = None

        n = vcfg.batch if (db_size or vcfg.initial_batch is None) else vcfg.initial_batch
        evals = sample(n, it)
        history.records.append(IterationRecord(it, db_size, score, saved, evals))

    return ValidityResult(best_model, history, False, best_score, X, Y)
