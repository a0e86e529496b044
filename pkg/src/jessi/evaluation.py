"""Metrics, ablation and stability harnesses, length buckets and the domain probe."""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .encoders import BISRU, CNN_MAXPOOL, BranchConfig
from .tensor import RngStream, Tensor, backward, ops

log = logging.getLogger(__name__)

NA = "NA"


class InsufficientRunsError(ValueError):
    pass


# ----------------------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, predictions, gold) -> "ConfusionCounts":
        pred = np.asarray(predictions).astype(np.int64).ravel()
        gold = np.asarray(gold).astype(np.int64).ravel()
        if pred.shape != gold.shape:
            raise ValueError(f"length mismatch: {pred.size} predictions, {gold.size} gold labels")
        for name, arr in (("predictions", pred), ("gold", gold)):
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} must be 0/1")
        return cls(int(((pred == 1) & (gold == 1)).sum()), int(((pred == 1) & (gold == 0)).sum()),
                   int(((pred == 0) & (gold == 1)).sum()), int(((pred == 0) & (gold == 0)).sum()))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def prf1(predictions, gold) -> tuple[float, float, float]:
    """Positive-class precision, recall and F1 with 0/0 taken as 0."""
    c = ConfusionCounts.from_predictions(predictions, gold)
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    return p, r, _ratio(2 * p * r, p + r)


@dataclass(frozen=True)
class StabilityRow:
    model: str
    n: int
    min: float
    max: float
    mean: float
    std: float

    def as_dict(self) -> dict:
        return {"Model": self.model, "n": self.n, "min": self.min, "max": self.max,
                "mean": self.mean, "std": self.std}


def stability_stats(scores, model: str = "") -> StabilityRow:
    """min/max/mean and sample standard deviation (divisor N-1)."""
    x = np.asarray(scores, dtype=np.float64).ravel()
    if x.size < 2:
        raise InsufficientRunsError(f"need at least 2 runs for a standard deviation, got {x.size}")
    mean = math.fsum(x.tolist()) / x.size
    var = math.fsum(((x - mean) ** 2).tolist()) / (x.size - 1)
    return StabilityRow(model, int(x.size), float(x.min()), float(x.max()), mean, math.sqrt(var))


@dataclass(frozen=True)
class LengthBucket:
    lo: int
    hi: int
    count: int
    correct: int

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.count if self.count else None

    @property
    def label(self) -> str:
        return f"[{self.lo},{self.hi})"


@dataclass
class LengthBucketReport:
    width: int
    buckets: list

    @property
    def total(self) -> int:
        return sum(b.count for b in self.buckets)

    def as_dict(self) -> dict:
        return {"width": self.width,
                "buckets": [{"range": b.label, "lo": b.lo, "hi": b.hi, "count": b.count,
                             "accuracy": b.accuracy} for b in self.buckets]}


def accuracy_by_length(predictions, gold, lengths, width: int = 10) -> LengthBucketReport:
    """Accuracy per sentence-length range [k*width, (k+1)*width).

    Buckets run contiguously from zero to the longest sentence; empty ones
    carry count 0 and no accuracy.
    """
    if width < 1:
        raise ValueError("bucket width must be positive")
    pred, gold, lengths = (np.asarray(a).astype(np.int64).ravel() for a in (predictions, gold, lengths))
    if not (pred.size == gold.size == lengths.size):
        raise ValueError("predictions, gold and lengths must align")
    if lengths.size == 0:
        return LengthBucketReport(width, [])
    if (lengths < 0).any():
        raise ValueError("lengths must be non-negative")
    which = lengths // width
    n_buckets = int(which.max()) + 1
    counts = np.bincount(which, minlength=n_buckets)
    correct = np.bincount(which, weights=(pred == gold).astype(np.float64), minlength=n_buckets)
    buckets = [LengthBucket(k * width, (k + 1) * width, int(counts[k]), int(round(correct[k])))
               for k in range(n_buckets)]
    return LengthBucketReport(width, buckets)


# ----------------------------------------------------------------------------- ablation

@dataclass(frozen=True)
class AblationVariant:
    name: str
    branches: BranchConfig
    domain_adversarial: bool

    def validate(self):
        self.branches.validate()
        return self


ABLATION_A = (
    AblationVariant("JESSI-A", BranchConfig(CNN_MAXPOOL, True, True), False),
    AblationVariant("+ BERT->BiSRU", BranchConfig(BISRU, True, True), False),
    AblationVariant("- CNN->Att", BranchConfig(CNN_MAXPOOL, False, True), False),
    AblationVariant("- BERT->CNN", BranchConfig(CNN_MAXPOOL, True, False), False),
)

ABLATION_B = (
    AblationVariant("JESSI-B", BranchConfig(BISRU, True, True), True),
    AblationVariant("- CNN->Att", BranchConfig(BISRU, False, True), True),
    AblationVariant("- BERT->BiSRU", BranchConfig(BISRU, True, False), True),
    AblationVariant("+ BERT->CNN", BranchConfig(CNN_MAXPOOL, True, True), True),
    AblationVariant("- DomAdv", BranchConfig(BISRU, True, True), False),
)

STABILITY_B = (
    AblationVariant("BERT->CNN", BranchConfig(CNN_MAXPOOL, False, True), True),
    AblationVariant("BERT->BiSRU", BranchConfig(BISRU, False, True), True),
    AblationVariant("JESSI-B", BranchConfig(BISRU, True, True), True),
    AblationVariant("CNN->Att", BranchConfig(BISRU, True, False), True),
)

STABILITY_A = (
    AblationVariant("BERT->CNN", BranchConfig(CNN_MAXPOOL, False, True), False),
    AblationVariant("JESSI-A", BranchConfig(CNN_MAXPOOL, True, True), False),
    AblationVariant("CNN->Att", BranchConfig(CNN_MAXPOOL, True, False), False),
)


def ablation_variants(subtask: str) -> tuple:
    try:
        return {"A": ABLATION_A, "B": ABLATION_B}[subtask]
    except KeyError:
        raise ValueError(f"unknown subtask preset {subtask!r}") from None


def stability_variants(subtask: str) -> tuple:
    try:
        return {"A": STABILITY_A, "B": STABILITY_B}[subtask]
    except KeyError:
        raise ValueError(f"unknown subtask preset {subtask!r}") from None


def variant_config(config, variant: AblationVariant, seed: int | None = None):
    """TrainConfig with the variant's branches and adversarial flag swapped in."""
    model = replace(config.model, branches=variant.branches, domain_adversarial=variant.domain_adversarial)
    out = replace(config, model=model)
    return out if seed is None else replace(out, seed=seed)


@dataclass
class EvalData:
    """Training text, trial sets keyed by domain, and the scored split."""

    train: list
    trials: dict
    test: list


@dataclass(frozen=True)
class AblationRow:
    model: str
    f1: float | None
    error: str | None = None

    def as_dict(self) -> dict:
        return {"Model": self.model, "F-Score": self.f1, "error": self.error}


def _variant_job(args):
    from .training import train_model
    config, data = args
    return train_model(config, data.train, data.trials).score(data.test)


def _guarded(fn):
    def run(args):
        try:
            return fn(args), None
        except Exception as exc:  # a failed row is reported, not fatal
            return None, f"{type(exc).__name__}: {exc}"
    return run


def _guarded_variant_job(args):
    return _guarded(_variant_job)(args)


def run_ablation(variants, config, data: EvalData, n_jobs: int | None = None) -> list[AblationRow]:
    """Train and score each variant with the shared seed; rows keep request order."""
    from .training import run_jobs
    for v in variants:
        v.validate()
    jobs = [(variant_config(config, v), data) for v in variants]
    results = run_jobs(_guarded_variant_job, jobs, n_jobs)
    rows = []
    for v, (f1, err) in zip(variants, results):
        if err:
            log.warning("ablation row %s failed: %s", v.name, err)
        rows.append(AblationRow(v.name, f1, err))
    return rows


def run_stability(variants, config, data: EvalData, runs: int = 10,
                  n_jobs: int | None = None) -> list[StabilityRow]:
    """Train ``runs`` seeds per variant and summarize the scores on ``data.test``."""
    from .training import run_jobs
    if runs < 2:
        raise InsufficientRunsError(f"need at least 2 runs for a standard deviation, got {runs}")
    for v in variants:
        v.validate()
    base = RngStream(config.seed)
    seeds = [int(base.child("run", r).seed) for r in range(runs)]
    jobs = [(variant_config(config, v, s), data) for v in variants for s in seeds]
    scores = run_jobs(_variant_job, jobs, n_jobs)
    return [stability_stats(scores[i * runs:(i + 1) * runs], v.name) for i, v in enumerate(variants)]


# ----------------------------------------------------------------------------- domain probe

def domain_probe(encodings, domains, rng: RngStream, hidden: int = 32, epochs: int = 100,
                 train_fraction: float = 0.8) -> float:
    """Held-out accuracy of a fresh two-layer classifier predicting domain from frozen vectors.

    The split is stratified per domain; features are standardized with
    training-split statistics. Full-batch Adadelta on cross-entropy.
    """
    from .training import Adadelta
    from .nn import Linear
    x = np.asarray(encodings, dtype=np.float64)
    d = np.asarray(domains).astype(np.int64).ravel()
    if x.ndim != 2 or len(x) != len(d):
        raise ValueError("encodings must be (N, D) aligned with domain labels")
    classes = np.unique(d)
    if len(classes) < 2:
        raise ValueError("domain probe needs examples from two domains")
    train_idx, test_idx = [], []
    split_rng = rng.child("split")
    for c in classes:
        idx = np.flatnonzero(d == c)
        if len(idx) < 2:
            raise ValueError(f"domain {c} has fewer than 2 examples")
        idx = idx[split_rng.permutation(len(idx))]
        cut = min(max(int(round(train_fraction * len(idx))), 1), len(idx) - 1)
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    tr, te = np.concatenate(train_idx), np.concatenate(test_idx)
    mu, sd = x[tr].mean(axis=0), x[tr].std(axis=0)
    sd[sd < 1e-12] = 1.0
    z = (x - mu) / sd

    init = rng.child("init")
    layer1 = Linear(x.shape[1], hidden, init, np.float64)
    layer2 = Linear(hidden, 2, init, np.float64)
    params = [layer1.weight, layer1.bias, layer2.weight, layer2.bias]
    opt = Adadelta(params)
    xt, yt = Tensor(z[tr]), d[tr]
    for _ in range(epochs):
        opt.zero_grad()
        loss = ops.cross_entropy(ops.softmax(layer2(ops.tanh(layer1(xt)))), yt)
        backward(loss)
        opt.step()
    logits = layer2(ops.tanh(layer1(Tensor(z[te])))).data
    return float((logits.argmax(axis=1) == d[te]).mean())


# ----------------------------------------------------------------------------- report writers

def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def aligned_csv(header, rows) -> str:
    """Comma-separated table padded so the columns line up."""
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    buf = io.StringIO()
    for r in cells:
        buf.write(", ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def stability_csv(rows) -> str:
    return aligned_csv(["Model", "min", "max", "mean", "std"],
                       [[r.model, r.min, r.max, r.mean, r.std] for r in rows])


def ablation_csv(rows) -> str:
    return aligned_csv(["Model", "F-Score"], [[r.model, r.f1] for r in rows])


def length_csv(report: LengthBucketReport) -> str:
    return aligned_csv(["range", "count", "accuracy"],
                       [[b.label, b.count, b.accuracy] for b in report.buckets])


def prf_csv(p: float, r: float, f1: float, n: int) -> str:
    return aligned_csv(["P", "R", "F1", "n"], [[p, r, f1, n]])
