import math

import numpy as np
import pytest
from conftest import tiny_config
from hypothesis import given, settings
from hypothesis import strategies as st

from jessi.encoders import BISRU, CNN_MAXPOOL, BranchConfig
from jessi.tensor import Parameter, RngStream
from jessi.text import SynthSpec, encode, synth_generate
from jessi.training import (
    Adadelta,
    AdadeltaState,
    NonFiniteGradientError,
    TrainConfig,
    TrainingError,
    adadelta_step,
    ensemble_predict,
    ensemble_select,
    evaluate_f1,
    fold_partition,
    kfold_train,
    majority_vote,
    max_norm_project,
    prepare_resources,
    train_model,
)


# ------------------------------------------------------------------ optimizer

def test_first_adadelta_step_value():
    x = np.array([0.0])
    adadelta_step(x, np.array([1.0]), AdadeltaState.zeros_like(x))
    assert x[0] == pytest.approx(-0.0044721, abs=1e-6)


def test_zero_gradient_is_identity():
    x = np.array([1.0, -2.0])
    st_ = AdadeltaState.zeros_like(x)
    st_.sq_grad[:] = 0.3
    st_.sq_delta[:] = 0.1
    adadelta_step(x, np.zeros(2), st_)
    # the accumulators decay by rho on a zero gradient; the parameter stays put
    np.testing.assert_array_equal(x, [1.0, -2.0])
    fresh = AdadeltaState.zeros_like(x)
    adadelta_step(x, np.zeros(2), fresh)
    assert not fresh.sq_grad.any() and not fresh.sq_delta.any()


def scalar_adadelta_oracle(x, steps, rho=0.95, eps=1e-6):
    g2 = d2 = 0.0
    xs = []
    for _ in range(steps):
        g = 2 * x
        g2 = rho * g2 + (1 - rho) * g * g
        d = -math.sqrt(d2 + eps) / math.sqrt(g2 + eps) * g
        d2 = rho * d2 + (1 - rho) * d * d
        x += d
        xs.append(x)
    return xs


def test_parabola_matches_scalar_oracle():
    x = np.array([1.0])
    state = AdadeltaState.zeros_like(x)
    traj = []
    for _ in range(400):
        adadelta_step(x, 2 * x, state)
        traj.append(x[0])
    np.testing.assert_allclose(traj, scalar_adadelta_oracle(1.0, 400), rtol=1e-12)
    assert all(b < a for a, b in zip(traj, traj[1:]))
    assert traj[-1] ** 2 < 1e-2
    assert (state.sq_grad >= 0).all() and (state.sq_delta >= 0).all()


def test_non_finite_gradient_aborts_without_change():
    x = np.array([1.0])
    state = AdadeltaState.zeros_like(x)
    with pytest.raises(NonFiniteGradientError):
        adadelta_step(x, np.array([np.nan]), state)
    assert x[0] == 1.0 and state.sq_grad[0] == 0.0


def test_optimizer_checks_every_gradient_before_stepping():
    a, b = Parameter(np.ones(2)), Parameter(np.ones(2))
    opt = Adadelta([a, b])
    a.grad[:] = 1.0
    b.grad[:] = np.inf
    with pytest.raises(NonFiniteGradientError):
        opt.step()
    np.testing.assert_array_equal(a.data, 1.0)


def test_max_norm_examples():
    w = np.array([[6.0, 8.0], [0.6, 0.8]])
    max_norm_project(w, 3.0)
    np.testing.assert_allclose(w, [[1.8, 2.4], [0.6, 0.8]])


def test_max_norm_random_and_idempotent():
    w = RngStream(0).normal(0, 3, (20, 30))
    max_norm_project(w)
    assert np.linalg.norm(w, axis=1).max() <= 3 + 1e-6
    once = w.copy()
    max_norm_project(w)
    np.testing.assert_array_equal(w, once)


def test_max_norm_out_axis_for_conv_kernels():
    k = RngStream(1).normal(0, 5, (3, 4, 6))
    max_norm_project(k, 3.0, out_axis=-1)
    norms = np.sqrt((k ** 2).sum(axis=(0, 1)))
    assert norms.max() <= 3 + 1e-6


def test_max_norm_only_on_weight_matrices():
    from jessi.model import JessiModel
    cfg = tiny_config(branches=BranchConfig(BISRU, True, True), domain_adversarial=True, max_norm=3.0)
    model = JessiModel(cfg, RngStream(0))
    for name, p in model.named_parameters():
        if p.max_norm is not None:
            assert p.ndim >= 2, name
        if name.endswith("bias"):
            assert p.max_norm is None, name


# ------------------------------------------------------------------ training loop

@pytest.fixture(scope="module")
def corpus():
    return synth_generate(SynthSpec(n_train=240, n_trial=40, n_test=80), RngStream(11))


def small_train_config(**kw):
    model = tiny_config(vocab_size=0, dim_g=8, dim_c=8, filter_channels=8, attention_width=8,
                        d_model=8, mlp_hidden=16, max_len=32, dropout=0.1,
                        branches=kw.pop("branches", BranchConfig(CNN_MAXPOOL, True, True)),
                        domain_adversarial=kw.pop("adv", False))
    base = dict(model=model, max_epochs=3, patience=5, folds=3, top_k=3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def trials_of(c):
    return {"A": c.trial_a, "B": c.trial_b}


def test_train_model_learns_and_restores_best(corpus):
    tm = train_model(small_train_config(max_epochs=6), corpus.train, trials_of(corpus))
    assert tm.best_f1 == max(tm.history)
    assert tm.history[tm.best_epoch] == tm.best_f1
    assert tm.score(corpus.trial_a) == pytest.approx(tm.best_f1)
    assert evaluate_f1(tm.model, encode(corpus.trial_a, tm.vocab, 32)) == pytest.approx(tm.best_f1)


def test_training_is_deterministic(corpus):
    cfg = small_train_config(branches=BranchConfig(BISRU, True, True), adv=True, max_epochs=2)
    a = train_model(cfg, corpus.train, trials_of(corpus))
    b = train_model(cfg, corpus.train, trials_of(corpus))
    assert a.history == b.history
    for (n, x), (_, y) in zip(a.model.state_dict().items(), b.model.state_dict().items()):
        np.testing.assert_array_equal(x, y, err_msg=n)


def test_patience_zero_stops_at_first_non_improving_epoch(corpus, monkeypatch):
    import jessi.training as training
    scores = iter([0.5, 0.7, 0.7, 0.9, 0.95])
    monkeypatch.setattr(training, "evaluate_f1", lambda model, ex: next(scores))
    tm = train_model(small_train_config(max_epochs=5, patience=0), corpus.train[:40], trials_of(corpus))
    assert tm.history == [0.5, 0.7, 0.7]
    # a tie keeps the later snapshot
    assert tm.best_epoch == 2 and tm.best_f1 == 0.7


def test_train_model_input_errors(corpus):
    cfg = small_train_config()
    with pytest.raises(ValueError):
        train_model(cfg, [], trials_of(corpus))
    with pytest.raises(ValueError):
        train_model(cfg, corpus.train, {"B": corpus.trial_b})
    with pytest.raises(ValueError):
        train_model(small_train_config(adv=True, early_stop_trial="B"), corpus.train, {"B": corpus.trial_b})


def test_non_finite_loss_aborts(corpus, monkeypatch):
    import jessi.training as training
    real = training.combined_loss

    def poisoned(*args):
        loss = real(*args)
        loss.data = np.array(np.nan, dtype=loss.data.dtype)
        return loss

    monkeypatch.setattr(training, "combined_loss", poisoned)
    with pytest.raises(TrainingError, match="non-finite"):
        train_model(small_train_config(max_epochs=1), corpus.train[:40], trials_of(corpus))


@pytest.mark.parametrize("cfg", [
    dict(top_k=4, folds=3), dict(batch_size=0), dict(early_stop_trial="C"), dict(lambda_gamma=0.0),
])
def test_train_config_validation(cfg):
    with pytest.raises(ValueError):
        small_train_config(**cfg).validate()


# ------------------------------------------------------------------ folds and ensembles

@settings(max_examples=40, deadline=None)
@given(st.integers(10, 200), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_fold_partition_properties(n, k, seed):
    parts = fold_partition(n, k, RngStream(seed))
    sizes = [len(p) for p in parts]
    assert max(sizes) - min(sizes) <= 1
    union = np.concatenate(parts)
    assert sorted(union.tolist()) == list(range(n))


def test_fold_partition_needs_enough_examples():
    with pytest.raises(ValueError):
        fold_partition(5, 10, RngStream(0))


def test_kfold_returns_one_model_per_fold(corpus):
    cfg = small_train_config(max_epochs=1)
    res = prepare_resources(cfg, corpus.train, trials_of(corpus))
    models = kfold_train(cfg, corpus.train, trials_of(corpus), res, n_jobs=1)
    assert [m.fold for m in models] == [0, 1, 2]
    assert all(0.0 <= m.best_f1 <= 1.0 for m in models)
    assert all(m.heldout_f1 is not None for m in models)


def test_kfold_parallel_equals_serial(corpus):
    cfg = small_train_config(max_epochs=1)
    serial = kfold_train(cfg, corpus.train, trials_of(corpus), n_jobs=1)
    parallel = kfold_train(cfg, corpus.train, trials_of(corpus), n_jobs=2)
    assert [m.history for m in serial] == [m.history for m in parallel]


def test_ensemble_select_examples():
    ens = ensemble_select(list("abcde"), [0.7, 0.9, 0.6, 0.8, 0.1], 3)
    assert ens.members == ["b", "d", "a"] and ens.scores == [0.9, 0.8, 0.7]
    tie = ensemble_select(list("abcd"), [0.9, 0.8, 0.5, 0.8], 2)
    assert tie.indices == [0, 1]
    with pytest.raises(ValueError):
        ensemble_select(["a"], [0.5], 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=12))
def test_ensemble_select_equals_sort_oracle(scores):
    ens = ensemble_select(list(range(len(scores))), scores, 3)
    oracle = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:3]
    assert ens.indices == oracle


def test_majority_vote_examples_and_order_invariance():
    assert majority_vote([[1], [1], [0]]).tolist() == [1]
    assert majority_vote([[0], [0], [0]]).tolist() == [0]
    votes = RngStream(0).integers(0, 2, (3, 1000))
    mode = (votes.sum(axis=0) >= 2).astype(int)
    assert (majority_vote(votes) == mode).all()
    assert (majority_vote(votes[[2, 0, 1]]) == mode).all()


def test_ensemble_predict_with_even_members_rejected():
    from jessi.training import Ensemble
    with pytest.raises(ValueError):
        ensemble_predict(Ensemble([1, 2], [0.5, 0.5], [0, 1]), [])
