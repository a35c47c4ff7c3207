"""Unit tests for the training loop, fast critic gradients, and inference."""

import numpy as np
import pytest

from catebal.autodiff import Tape
from catebal.balancing import marginal_loss, projection_loss
from catebal.datagen import CaseStudyDgp, RctOutcomes, TabularDataset, gen_rct_outcomes
from catebal.networks import (
    MARGINAL_CRITIC,
    OUTCOME,
    PROJECTION_CRITIC,
    init_params,
    marginal_critic_architecture,
    outcome_architecture,
    projection_critic_architecture,
    zero_params,
)
from catebal.trainer import (
    TrainConfig,
    TrainingDiverged,
    _marginal_ascent_step,
    _projection_ascent_step,
    inner_balancing_steps,
    load_model,
    predict_cate,
    predict_factual,
    predict_potential_outcomes,
    save_model,
    train,
)


def tiny_data(n=24, seed=0):
    obs = CaseStudyDgp().sample(n, seed)
    rct = gen_rct_outcomes(CaseStudyDgp(), 10, 0.5, seed + 1)
    return obs, rct


def tiny_config(method, **kw):
    kw.setdefault("epochs", 6)
    kw.setdefault("batch_size", 16)
    kw.setdefault("mc_samples", 8)
    kw.setdefault("inner_steps_low", 2)
    kw.setdefault("inner_steps_high", 3)
    return TrainConfig(method=method, **kw)


# ----------------------------------------------------------------- config


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(method="unknown")
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(mc_samples=-1)
    cfg = TrainConfig(method="MB+PB")
    assert cfg.method == "mb+pb" and cfg.uses_marginal and cfg.uses_projection
    assert not TrainConfig(method="baseline").uses_marginal
    assert TrainConfig(method="mb").uses_marginal
    assert not TrainConfig(method="mb").uses_projection


def test_train_config_ramp_rescales_with_epochs():
    cfg = TrainConfig(epochs=1000)
    assert (cfg.ramp_start_epoch, cfg.ramp_end_epoch) == (615, 715)
    # an explicit ramp is left alone
    cfg2 = TrainConfig(epochs=1000, ramp_start_epoch=100, ramp_end_epoch=200)
    assert (cfg2.ramp_start_epoch, cfg2.ramp_end_epoch) == (100, 200)


def test_inner_balancing_steps():
    cfg = TrainConfig()
    assert inner_balancing_steps(cfg, 0) == 5
    assert inner_balancing_steps(cfg, 1229) == 5
    assert inner_balancing_steps(cfg, 1230) == 50
    assert inner_balancing_steps(cfg, 1999) == 50
    with pytest.raises(ValueError):
        inner_balancing_steps(cfg, 2000)


# ------------------------------------------------------------- train loop


def test_train_is_deterministic():
    obs, rct = tiny_data()
    a = train(obs, rct, tiny_config("mb+pb", seed=5))
    b = train(obs, rct, tiny_config("mb+pb", seed=5))
    for pa, pb in zip(a.outcome.flat_arrays(), b.outcome.flat_arrays()):
        np.testing.assert_array_equal(pa, pb)
    for pa, pb in zip(a.generator.flat_arrays(), b.generator.flat_arrays()):
        np.testing.assert_array_equal(pa, pb)
    assert [h.total for h in a.history] == [h.total for h in b.history]


def test_method_gating():
    obs, rct = tiny_data()
    base = train(obs, None, tiny_config("baseline"))
    assert base.generator is None
    assert base.marginal_critic is None and base.projection_critic is None
    mb = train(obs, rct, tiny_config("mb"))
    assert mb.marginal_critic is not None and mb.projection_critic is None
    assert all(h.projection == 0.0 for h in mb.history)
    pb = train(obs, rct, tiny_config("pb"))
    assert pb.marginal_critic is None and pb.projection_critic is not None
    assert all(h.marginal == 0.0 for h in pb.history)
    both = train(obs, rct, tiny_config("mb+pb"))
    assert both.marginal_critic is not None and both.projection_critic is not None


def test_train_input_validation():
    obs, rct = tiny_data()
    with pytest.raises(ValueError):
        train(obs, None, tiny_config("mb"))
    one_arm = TabularDataset(np.arange(4.0), [1, 1, 1, 1], np.zeros(4))
    with pytest.raises(ValueError):
        train(one_arm, rct, tiny_config("baseline"))


def test_train_diverged_on_nonfinite_loss():
    obs, _ = tiny_data()
    obs.y[0] = np.inf
    with pytest.raises(TrainingDiverged):
        train(obs, None, tiny_config("baseline"))


def test_history_records_alpha_schedule():
    obs, rct = tiny_data()
    cfg = tiny_config("mb", epochs=4, ramp_start_epoch=2, ramp_end_epoch=4)
    model = train(obs, rct, cfg)
    assert [h.alpha for h in model.history] == pytest.approx([0.01, 0.01, 0.01, 50.005])


# ----------------------------------------- fast critic gradient regression


def tape_critic_gradient(loss_builder, critic):
    """Gradient of a tape-built loss with respect to the critic, flattened."""
    tape = Tape()
    loss = loss_builder(tape)
    tape.backward(loss)
    out = []
    for a in critic.flat_arrays():
        g = tape.grad_for(a)
        out.append(np.zeros(a.size) if g is None else g.ravel())
    return float(loss.data), np.concatenate(out)


def test_marginal_ascent_matches_tape_gradient():
    rng = np.random.default_rng(21)
    critic = init_params(marginal_critic_architecture(), rng, MARGINAL_CRITIC)
    pred1 = rng.normal(size=(13, 1))
    pred0 = rng.normal(size=(13, 1))
    rct = RctOutcomes(rng.normal(size=6), rng.normal(size=4), 0.5)

    value, fast = _marginal_ascent_step(critic, pred1, pred0, rct)
    tape_value, tape_grad = tape_critic_gradient(
        lambda tape: marginal_loss(
            tape, tape.const(pred1), tape.const(pred0), rct, critic
        ),
        critic,
    )
    assert value == pytest.approx(tape_value, rel=1e-14)
    # fast path differentiates -L_m
    np.testing.assert_allclose(fast, -tape_grad, rtol=1e-12, atol=1e-16)


def test_projection_ascent_matches_tape_gradient():
    rng = np.random.default_rng(22)
    critic = init_params(projection_critic_architecture(2), rng, PROJECTION_CRITIC)
    x_obs = rng.normal(size=(11, 2))
    pred1 = rng.normal(size=(11, 1))
    pred0 = rng.normal(size=(11, 1))
    rct = RctOutcomes(rng.normal(size=5), rng.normal(size=7), 0.5)
    lam1 = rng.integers(0, 11, size=5)
    lam0 = rng.integers(0, 11, size=7)

    value, fast = _projection_ascent_step(critic, x_obs, pred1, pred0, rct, lam1, lam0)
    tape_value, tape_grad = tape_critic_gradient(
        lambda tape: projection_loss(
            tape, x_obs, tape.const(pred1), tape.const(pred0), rct, critic,
            pairing=(lam1, lam0),
        ),
        critic,
    )
    assert value == pytest.approx(tape_value, rel=1e-14)
    np.testing.assert_allclose(fast, -tape_grad, rtol=1e-12, atol=1e-16)


# -------------------------------------------------------------- inference


def test_predict_validation_and_baseline_invariance():
    obs, _ = tiny_data()
    model = train(obs, None, tiny_config("baseline"))
    x = np.linspace(0.5, 1.5, 5).reshape(-1, 1)
    with pytest.raises(ValueError):
        predict_potential_outcomes(model, x, 2)
    with pytest.raises(ValueError):
        predict_potential_outcomes(model, x, 1, mc_samples=0)
    # without a generator the pseudo-confounder is pinned to zero, so the
    # prediction cannot depend on the Monte-Carlo sample count or seed
    a = predict_potential_outcomes(model, x, 1, mc_samples=1, seed=0)
    b = predict_potential_outcomes(model, x, 1, mc_samples=50, seed=9)
    np.testing.assert_array_equal(a, b)


def test_predict_cate_is_arm_difference():
    obs, rct = tiny_data()
    model = train(obs, rct, tiny_config("mb+pb"))
    x = np.linspace(0.5, 1.5, 4).reshape(-1, 1)
    # shared pseudo-confounder draws make the decomposition exact
    tau = predict_cate(model, x, mc_samples=16, seed=3)
    p1 = predict_potential_outcomes(model, x, 1, mc_samples=16, seed=3)
    p0 = predict_potential_outcomes(model, x, 0, mc_samples=16, seed=3)
    np.testing.assert_allclose(tau, p1 - p0, rtol=1e-12, atol=1e-14)


def test_predict_factual_selects_by_treatment():
    obs, rct = tiny_data()
    model = train(obs, rct, tiny_config("mb"))
    x = obs.x[:6]
    t = obs.t[:6]
    f = predict_factual(model, x, t, mc_samples=8, seed=1)
    p1 = predict_potential_outcomes(model, x, 1, mc_samples=8, seed=1)
    p0 = predict_potential_outcomes(model, x, 0, mc_samples=8, seed=1)
    np.testing.assert_allclose(f, t * p1 + (1 - t) * p0)


def test_zero_outcome_network_predicts_zero():
    obs, _ = tiny_data()
    model = train(obs, None, tiny_config("baseline"))
    model.outcome = zero_params(outcome_architecture(1), OUTCOME)
    np.testing.assert_array_equal(
        predict_cate(model, np.ones((3, 1)), mc_samples=2), np.zeros(3)
    )


# -------------------------------------------------------------- round trip


def test_save_load_round_trip(tmp_path):
    obs, rct = tiny_data()
    model = train(obs, rct, tiny_config("mb+pb", seed=2))
    save_model(tmp_path / "model", model)
    loaded = load_model(tmp_path / "model")
    assert loaded.config == model.config
    for a, b in zip(model.outcome.flat_arrays(), loaded.outcome.flat_arrays()):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(model.generator.flat_arrays(), loaded.generator.flat_arrays()):
        np.testing.assert_array_equal(a, b)
    assert len(loaded.history) == len(model.history)
    assert loaded.history[-1].total == model.history[-1].total
    x = np.linspace(0.5, 1.5, 7).reshape(-1, 1)
    np.testing.assert_array_equal(
        predict_cate(model, x, mc_samples=4), predict_cate(loaded, x, mc_samples=4)
    )
