"""Adadelta training with max-norm constraints, early stopping, k-fold runs and top-k voting."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .encoders import ModelConfig
from .evaluation import prf1
from .heads import combined_loss, lambda_at
from .model import JessiModel
from .tensor import Parameter, RngStream, backward
from .text import (
    DOMAIN_SOURCE,
    DOMAIN_TARGET,
    EncodedExample,
    RawExample,
    Vocab,
    build_vocab,
    collate,
    encode,
    load_embeddings,
    make_batches,
)

log = logging.getLogger(__name__)

RHO = 0.95
EPS = 1e-6


class TrainingError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


# ----------------------------------------------------------------------------- optimizer

@dataclass
class AdadeltaState:
    sq_grad: np.ndarray
    sq_delta: np.ndarray

    @classmethod
    def zeros_like(cls, param) -> "AdadeltaState":
        data = param.data if isinstance(param, Parameter) else np.asarray(param)
        return cls(np.zeros_like(data), np.zeros_like(data))


def adadelta_step(param: np.ndarray, grad: np.ndarray, state: AdadeltaState,
                  rho: float = RHO, eps: float = EPS) -> np.ndarray:
    """One in-place Adadelta update of ``param``; returns ``param``."""
    if param.shape != grad.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("non-finite gradient; step aborted")
    state.sq_grad *= rho
    state.sq_grad += (1.0 - rho) * grad * grad
    delta = -np.sqrt(state.sq_delta + eps) / np.sqrt(state.sq_grad + eps) * grad
    state.sq_delta *= rho
    state.sq_delta += (1.0 - rho) * delta * delta
    param += delta
    return param


def max_norm_project(param: np.ndarray, bound: float = 3.0, out_axis: int = 0) -> np.ndarray:
    """Rescale every output unit whose weight vector has L2 norm above ``bound``.

    Works in place and returns ``param``. A vector is treated as a single unit.
    """
    # rows already projected may sit a few ulps above the bound; leave them alone
    trigger = bound * (1.0 + 64 * np.finfo(param.dtype).eps)
    if param.ndim <= 1:
        norm = float(np.sqrt((param.astype(np.float64) ** 2).sum()))
        if norm > trigger:
            param *= bound / norm
        return param
    moved = np.moveaxis(param, out_axis, 0)
    rows = moved.reshape(moved.shape[0], -1)
    norms = np.sqrt((rows.astype(np.float64) ** 2).sum(axis=1))
    scale = np.where(norms > trigger, bound / np.maximum(norms, 1e-30), 1.0).astype(param.dtype)
    shape = [1] * param.ndim
    shape[out_axis] = -1
    param *= scale.reshape(shape)
    return param


class Adadelta:
    def __init__(self, params, rho: float = RHO, eps: float = EPS):
        self.params = [p for p in params if p.requires_grad]
        self.rho, self.eps = rho, eps
        self.state = [AdadeltaState.zeros_like(p) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            if not np.isfinite(p.grad).all():
                raise NonFiniteGradientError(f"non-finite gradient in {p.name or p}")
        for p, st in zip(self.params, self.state):
            adadelta_step(p.data, p.grad, st, self.rho, self.eps)
            if p.max_norm is not None:
                max_norm_project(p.data, p.max_norm, p.out_axis)


# ----------------------------------------------------------------------------- configuration

@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 32
    domain_batch_size: int = 32
    max_epochs: int = 20
    patience: int = 5
    folds: int = 10
    top_k: int = 3
    lambda_gamma: float = 10.0
    early_stop_trial: str = DOMAIN_SOURCE
    min_frequency: int = 1
    seed: int = 13
    precision: str = "float32"
    embeddings_g: str | None = None
    embeddings_c: str | None = None
    bert_weights: str | None = None

    def validate(self):
        m = self.model
        m.branches.validate()
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("batch_size and max_epochs must be positive, patience non-negative")
        if self.domain_batch_size < 2:
            raise ValueError("domain_batch_size must be at least 2")
        if not 0.0 <= m.dropout < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {m.dropout}")
        if m.max_norm is not None and m.max_norm <= 0:
            raise ValueError("max_norm must be positive")
        if self.folds < 2 or not 1 <= self.top_k <= self.folds:
            raise ValueError("need folds >= 2 and 1 <= top_k <= folds")
        if self.lambda_gamma <= 0:
            raise ValueError("lambda_gamma must be positive")
        if self.early_stop_trial not in (DOMAIN_SOURCE, DOMAIN_TARGET):
            raise ValueError("early_stop_trial must be 'A' or 'B'")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        if any(h % 2 == 0 for h in m.filter_sizes):
            raise ValueError("filter sizes must be odd")
        return self


# ----------------------------------------------------------------------------- data preparation

@dataclass
class Resources:
    """Vocabulary and embedding tables shared by every model of a run."""

    vocab: Vocab
    table_g: np.ndarray | None
    table_c: np.ndarray | None


def prepare_resources(config: TrainConfig, train, trials: dict) -> Resources:
    """Vocabulary from training plus trial sentences; embeddings from files or random."""
    corpus = list(train) + [ex for split in trials.values() for ex in split]
    vocab = build_vocab(corpus, config.min_frequency)
    rng = RngStream(config.seed).child("embeddings")
    dtype = np.dtype(config.precision)
    m = config.model
    table_g = table_c = None
    if m.branches.include_cnn_branch:
        table_g = load_embeddings(config.embeddings_g, vocab, m.dim_g, rng.child("g"), dtype)
        table_c = load_embeddings(config.embeddings_c, vocab, m.dim_c, rng.child("c"), dtype)
    return Resources(vocab, table_g, table_c)


def _encoded(examples, vocab: Vocab, max_len: int) -> list[EncodedExample]:
    if examples and isinstance(examples[0], RawExample):
        return encode(examples, vocab, max_len)
    return list(examples)


# ----------------------------------------------------------------------------- training

@dataclass
class TrainedModel:
    model: JessiModel
    vocab: Vocab
    history: list
    best_epoch: int
    best_f1: float
    fold: int | None = None
    heldout_f1: float | None = None

    def record(self) -> dict:
        return {"fold": self.fold, "epochs": len(self.history), "trialF1PerEpoch": self.history,
                "bestEpoch": self.best_epoch, "bestF1": self.best_f1, "heldoutF1": self.heldout_f1}

    def score(self, examples) -> float:
        """F1 on raw or encoded examples, indexed with this model's vocabulary."""
        return evaluate_f1(self.model, _encoded(examples, self.vocab, self.model.cfg.max_len))


def build_model(config: TrainConfig, resources: Resources, rng: RngStream) -> JessiModel:
    cfg = replace(config.model, vocab_size=len(resources.vocab))
    model = JessiModel(cfg, rng, resources.table_g, resources.table_c, dtype=np.dtype(config.precision))
    if config.bert_weights and getattr(model.encoder, "bert", None) is not None:
        model.encoder.bert.load_weights(config.bert_weights)
    return model


def evaluate_f1(model: JessiModel, examples) -> float:
    gold = np.array([ex.label for ex in examples])
    return prf1(model.predict(examples), gold)[2]


def train_model(config: TrainConfig, train, trials: dict, resources: Resources | None = None,
                seed: int | None = None) -> TrainedModel:
    """Train one model with early stopping on the configured trial set.

    ``trials`` maps domain tag ("A"/"B") to trial examples. The trial set named
    by ``early_stop_trial`` must be labeled; with domain-adversarial training
    every trial set also feeds the domain classifier, label-blind.
    """
    config.validate()
    if not train:
        raise ValueError("training set is empty")
    resources = resources or prepare_resources(config, train, trials)
    vocab, max_len = resources.vocab, config.model.max_len
    train_enc = _encoded(train, vocab, max_len)
    trial_enc = {k: _encoded(v, vocab, max_len) for k, v in trials.items()}
    stop_set = trial_enc.get(config.early_stop_trial)
    if not stop_set or any(ex.label is None for ex in stop_set):
        raise ValueError(f"early stopping needs a labeled trial set {config.early_stop_trial!r}")
    adversarial = config.model.domain_adversarial
    if adversarial and not all(trial_enc.get(d) for d in (DOMAIN_SOURCE, DOMAIN_TARGET)):
        raise ValueError("domain-adversarial training needs trial sentences from both domains")

    root = RngStream(config.seed if seed is None else seed)
    model = build_model(config, resources, root.child("init"))
    opt = Adadelta(model.trainable_parameters())
    drop_rng, shuffle_rng, domain_rng = root.child("dropout"), root.child("shuffle"), root.child("domain")
    half = config.domain_batch_size // 2

    history, best_f1, best_epoch, best_state, stale = [], -1.0, -1, None, 0
    for epoch in range(config.max_epochs):
        lam = lambda_at(epoch, config.max_epochs, config.lambda_gamma) if adversarial else 0.0
        model.train()
        for batch in make_batches(train_enc, config.batch_size, shuffle=True, rng=shuffle_rng.child(epoch)):
            opt.zero_grad()
            p_y = model.suggestion_probs(model.encode(batch, drop_rng), drop_rng)
            p_d = d_gold = None
            if adversarial and lam > 0:
                dbatch = _domain_batch(trial_enc, half, domain_rng)
                p_d = model.domain_probs(model.encode(dbatch, drop_rng), drop_rng)
                d_gold = dbatch.domains
            loss = combined_loss(p_y, batch.labels, p_d, d_gold, lam)
            if not np.isfinite(loss.data).all():
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            backward(loss)
            try:
                opt.step()
            except NonFiniteGradientError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
        f1 = evaluate_f1(model, stop_set)
        history.append(f1)
        log.debug("epoch %d lambda %.4f trial F1 %.4f", epoch, lam, f1)
        # a tie refreshes the snapshot (later epochs saw a larger lambda) but
        # only a strict gain resets patience
        if f1 >= best_f1:
            best_epoch, best_state = epoch, model.state_dict()
        if f1 > best_f1:
            best_f1, stale = f1, 0
        else:
            stale += 1
            if stale > config.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return TrainedModel(model, vocab, history, best_epoch, best_f1)


def _domain_batch(trial_enc: dict, per_domain: int, rng: RngStream):
    picked = []
    for tag in (DOMAIN_SOURCE, DOMAIN_TARGET):
        pool = trial_enc[tag]
        idx = rng.choice(len(pool), min(per_domain, len(pool)))
        picked.extend(pool[i] for i in idx)
    return collate(picked)


# ----------------------------------------------------------------------------- k-fold and ensembles

def fold_partition(n: int, folds: int, rng: RngStream) -> list[np.ndarray]:
    """Seeded split of range(n) into ``folds`` parts whose sizes differ by at most one."""
    if n < folds:
        raise ValueError(f"need at least {folds} examples for {folds}-fold training, got {n}")
    perm = rng.permutation(n)
    return [np.sort(perm[k::folds]) for k in range(folds)]


def _job_count(n_jobs: int | None, tasks: int) -> int:
    if n_jobs is None:
        n_jobs = int(os.environ.get("JESSI_THREADS", os.cpu_count() or 1))
    return max(1, min(n_jobs, tasks))


def _fold_job(args):
    config, train_enc, trial_enc, resources, k, held = args
    held_set = set(held.tolist())
    part = [ex for i, ex in enumerate(train_enc) if i not in held_set]
    seed = int(RngStream(config.seed).child("fold", k).seed)
    tm = train_model(config, part, trial_enc, resources, seed=seed)
    tm.fold = k
    heldout = [train_enc[i] for i in held]
    if heldout and all(ex.label is not None for ex in heldout):
        tm.heldout_f1 = evaluate_f1(tm.model, heldout)
    return tm


def run_jobs(fn, jobs: list, n_jobs: int | None = None) -> list:
    """Map ``fn`` over ``jobs`` in order, in worker processes when allowed."""
    workers = _job_count(n_jobs, len(jobs))
    if workers == 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def kfold_train(config: TrainConfig, train, trials: dict, resources: Resources | None = None,
                n_jobs: int | None = None) -> list[TrainedModel]:
    """Train one model per fold, each on the other ``folds - 1`` parts."""
    config.validate()
    resources = resources or prepare_resources(config, train, trials)
    train_enc = _encoded(train, resources.vocab, config.model.max_len)
    trial_enc = {k: _encoded(v, resources.vocab, config.model.max_len) for k, v in trials.items()}
    parts = fold_partition(len(train_enc), config.folds, RngStream(config.seed).child("folds"))
    jobs = [(config, train_enc, trial_enc, resources, k, parts[k]) for k in range(config.folds)]
    return run_jobs(_fold_job, jobs, n_jobs)


@dataclass
class Ensemble:
    members: list
    scores: list
    indices: list

    def __len__(self) -> int:
        return len(self.members)


def ensemble_select(models, scores, top_k: int = 3) -> Ensemble:
    """Keep the ``top_k`` highest scores; ties go to the lower index."""
    if len(models) != len(scores):
        raise ValueError("models and scores must align")
    if len(models) < top_k:
        raise ValueError(f"need at least {top_k} models, got {len(models)}")
    order = sorted(range(len(models)), key=lambda i: (-scores[i], i))[:top_k]
    return Ensemble([models[i] for i in order], [scores[i] for i in order], order)


def majority_vote(votes) -> np.ndarray:
    """Most common class per column of a (members, examples) 0/1 vote matrix."""
    votes = np.asarray(votes, dtype=np.int64)
    if votes.ndim == 1:
        votes = votes[:, None]
    ones = votes.sum(axis=0)
    return (2 * ones > votes.shape[0]).astype(np.int64)


def ensemble_predict(ensemble: Ensemble, examples) -> np.ndarray:
    """Majority vote of the members' argmax predictions."""
    if len(ensemble) % 2 == 0:
        raise ValueError("binary majority voting needs an odd number of members")
    members = [m.model if isinstance(m, TrainedModel) else m for m in ensemble.members]
    return majority_vote([m.predict(examples) for m in members])
