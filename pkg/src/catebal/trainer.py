"""End-to-end adversarial training loop and Monte-Carlo inference.

One run trains the pseudo-confounder generator and the S-learner outcome
network against the combined objective L_f + alpha * (L_m + L_p); after each
epoch's minimizer passes, the critics take several ascent steps on the
negated regularizer. Method variants:

  - "baseline": factual loss only, pseudo-confounder input pinned to zero,
    no critics ever constructed;
  - "mb": marginal balancing only (L_p recorded as 0);
  - "pb": projection balancing only (L_m recorded as 0);
  - "mb+pb": both regularizers.

Every run is deterministic given its seed: one master seed fans out into
named streams for initialization, fixed per-row noise, mini-batch shuffling,
RCT pairing, and inference noise.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import networks
from .autodiff import Adam, Tape
from .balancing import (
    AlphaSchedule,
    LossBreakdown,
    alpha_at,
    draw_pairing,
    factual_loss,
    marginal_loss,
    projection_loss,
)
from .datagen import RctOutcomes, TabularDataset, logistic
from .networks import (
    GENERATOR,
    MARGINAL_CRITIC,
    OUTCOME,
    PROJECTION_CRITIC,
    NetworkParams,
    generator_forward,
    init_params,
    mlp_forward_np,
    outcome_forward,
)

METHODS = ("baseline", "mb", "pb", "mb+pb")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    method: str = "mb+pb"
    epochs: int = 2000
    learning_rate: float = 0.001
    batch_size: int = 256
    alpha_start: float = 0.01
    alpha_end: float = 100.0
    ramp_start_epoch: int = 1230
    ramp_end_epoch: int = 1430
    inner_steps_low: int = 5
    inner_steps_high: int = 50
    noise_dim: int = 4
    mc_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        for name in ("epochs", "batch_size", "inner_steps_low", "inner_steps_high",
                     "noise_dim", "mc_samples"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # the default ramp is phrased for 2000 epochs; rescale it
        # proportionally when a different budget is requested
        if self.epochs != 2000 and (self.ramp_start_epoch, self.ramp_end_epoch) == (1230, 1430):
            self.ramp_start_epoch = int(round(self.epochs * 1230 / 2000))
            self.ramp_end_epoch = max(
                self.ramp_start_epoch + 1, int(round(self.epochs * 1430 / 2000))
            )
            self.ramp_end_epoch = min(self.ramp_end_epoch, self.epochs)
            self.ramp_start_epoch = min(self.ramp_start_epoch, self.ramp_end_epoch - 1)

    @property
    def alpha_schedule(self) -> AlphaSchedule:
        return AlphaSchedule(
            self.alpha_start,
            self.alpha_end,
            self.ramp_start_epoch,
            self.ramp_end_epoch,
            self.epochs,
        )

    @property
    def uses_marginal(self) -> bool:
        return self.method in ("mb", "mb+pb")

    @property
    def uses_projection(self) -> bool:
        return self.method in ("pb", "mb+pb")


def inner_balancing_steps(config: TrainConfig, epoch: int) -> int:
    """Few adversary steps while alpha is small, many once the ramp starts."""
    if not (0 <= epoch < config.epochs):
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    return (
        config.inner_steps_low
        if epoch < config.ramp_start_epoch
        else config.inner_steps_high
    )


@dataclass
class TrainedModel:
    config: TrainConfig
    generator: NetworkParams | None
    outcome: NetworkParams
    marginal_critic: NetworkParams | None
    projection_critic: NetworkParams | None
    history: list[LossBreakdown] = field(default_factory=list)


_STREAMS = {"init": 1, "noise": 2, "shuffle": 3, "pairing": 4, "inference": 5, "critic": 6}


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAMS[stream],)))


def _as_flat_views(params: NetworkParams) -> np.ndarray:
    """Re-point a network's arrays into one contiguous buffer.

    The weights and biases become views of the returned buffer, so a single
    Adam update on the buffer moves the whole network; per-element arithmetic
    is unchanged.
    """
    arrays = params.flat_arrays()
    buf = np.empty(sum(a.size for a in arrays))
    views, k = [], 0
    for a in arrays:
        view = buf[k : k + a.size].reshape(a.shape)
        view[...] = a
        views.append(view)
        k += a.size
    params.weights = views[0::2]
    params.biases = views[1::2]
    return buf


def _flat_grad(tape: Tape, params: NetworkParams) -> np.ndarray:
    grads = []
    for a in params.flat_arrays():
        g = tape.grad_for(a)
        grads.append(np.zeros(a.size) if g is None else g.ravel())
    return np.concatenate(grads)


def _predict_all_np(model_out, x, u_tilde):
    """No-grad predictions (yhat0, yhat1) for fixed pseudo-confounders."""
    n = x.shape[0]
    base = np.concatenate([x, u_tilde], axis=1)
    out0 = mlp_forward_np(model_out, np.concatenate([base, np.zeros((n, 1))], axis=1))
    out1 = mlp_forward_np(model_out, np.concatenate([base, np.ones((n, 1))], axis=1))
    return out0, out1


def train(obs: TabularDataset, rct: RctOutcomes | None, config: TrainConfig) -> TrainedModel:
    """Run the full training loop of the selected method."""
    if not (np.any(obs.t == 0) and np.any(obs.t == 1)):
        raise ValueError("observational data must contain both treatment arms")
    if config.method != "baseline":
        if rct is None or rct.y1.size == 0 or rct.y0.size == 0:
            raise ValueError("balancing methods require both RCT arms non-empty")

    init_rng = _rng(config.seed, "init")
    shuffle_rng = _rng(config.seed, "shuffle")
    pairing_rng = _rng(config.seed, "pairing")
    critic_rng = _rng(config.seed, "critic")

    outcome = init_params(networks.outcome_architecture(obs.d), init_rng, OUTCOME)
    model_nets = [outcome]
    generator = None
    if config.method != "baseline":
        generator = init_params(
            networks.generator_architecture(config.noise_dim), init_rng, GENERATOR
        )
        model_nets = [generator, outcome]
    m_critic = p_critic = None
    critic_opts = []
    if config.uses_marginal:
        m_critic = init_params(
            networks.marginal_critic_architecture(), init_rng, MARGINAL_CRITIC
        )
        critic_opts.append(Adam([_as_flat_views(m_critic)], config.learning_rate))
    if config.uses_projection:
        p_critic = init_params(
            networks.projection_critic_architecture(obs.d), init_rng, PROJECTION_CRITIC
        )
        critic_opts.append(Adam([_as_flat_views(p_critic)], config.learning_rate))
    model_opt = Adam([_as_flat_views(net) for net in model_nets], config.learning_rate)

    # fixed per-row noise, regenerated through the generator every epoch
    eta = _rng(config.seed, "noise").standard_normal((obs.n, config.noise_dim))

    schedule = config.alpha_schedule
    t_col = obs.t.reshape(-1, 1)
    history: list[LossBreakdown] = []

    for epoch in range(config.epochs):
        alpha = alpha_at(schedule, epoch)
        order = shuffle_rng.permutation(obs.n)
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, obs.n, config.batch_size):
            idx = order[start : start + config.batch_size]
            tape = Tape()
            x_b = tape.const(obs.x[idx])
            tb = t_col[idx]
            if generator is None:
                # factual-only method: one forward at the observed treatment
                u_b = tape.const(np.zeros((idx.size, 1)))
                yhat_f = outcome_forward(tape, outcome, x_b, u_b, tape.const(tb))
            else:
                u_b = generator_forward(tape, generator, tape.const(eta[idx]))
                yhat1 = outcome_forward(tape, outcome, x_b, u_b, 1)
                yhat0 = outcome_forward(tape, outcome, x_b, u_b, 0)
                yhat_f = tape.add(
                    tape.mul(tape.const(tb), yhat1),
                    tape.mul(tape.const(1.0 - tb), yhat0),
                )
            lf = factual_loss(tape, obs.y[idx], yhat_f)
            total = lf
            lm = lp = None
            if config.uses_marginal:
                lm = marginal_loss(tape, yhat1, yhat0, rct, m_critic, frozen_critic=True)
            if config.uses_projection:
                lp = projection_loss(
                    tape, obs.x[idx], yhat1, yhat0, rct, p_critic, pairing_rng,
                    frozen_critic=True,
                )
            if lm is not None or lp is not None:
                reg = lm if lp is None else (lp if lm is None else tape.add(lm, lp))
                total = tape.add(lf, tape.scale(reg, alpha))
            if not np.isfinite(total.data):
                raise TrainingDiverged(epoch)
            tape.backward(total)
            model_opt.step([_flat_grad(tape, net) for net in model_nets])
            sums += (
                float(lf.data),
                float(lm.data) if lm is not None else 0.0,
                float(lp.data) if lp is not None else 0.0,
            )
            n_batches += 1
        history.append(LossBreakdown(*(float(v) for v in sums / n_batches), alpha))

        if config.method != "baseline":
            _critic_ascent(
                obs, rct, eta, generator, outcome, m_critic, p_critic,
                critic_opts, inner_balancing_steps(config, epoch),
                config, pairing_rng, critic_rng, epoch,
            )

    return TrainedModel(config, generator, outcome, m_critic, p_critic, history)


def _critic_cached_forward(params, x):
    """Forward pass through a ReLU-hidden critic keeping what backprop needs."""
    ws, bs = params.weights, params.biases
    acts = [np.asarray(x, dtype=np.float64)]
    h = acts[0]
    for w, b in zip(ws[:-1], bs[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    a = h @ ws[-1] + bs[-1]
    if params.architecture.output_activation == "logistic":
        s = logistic(a)
        ds_da = s * (1.0 - s)
    else:
        s = np.tanh(a)
        ds_da = 1.0 - s * s
    return s, ds_da, acts


def _critic_backprop(params, acts, da):
    """Flat gradient vector (flat_arrays() order) given d(objective)/d(preact)."""
    ws = params.weights
    grads = [None] * (2 * len(ws))
    for i in range(len(ws) - 1, -1, -1):
        grads[2 * i] = (acts[i].T @ da).ravel()
        grads[2 * i + 1] = da.sum(axis=0)
        if i > 0:
            da = (da @ ws[i].T) * (acts[i] > 0.0)
    return np.concatenate(grads)


def _marginal_ascent_step(critic, pred1, pred0, rct):
    """Value of L_m and gradient of -L_m for the marginal critic.

    All four score batches (both predicted arms, both RCT arms) go through
    one stacked forward pass.
    """
    n1, n0, k1, k0 = pred1.size, pred0.size, rct.y1.size, rct.y0.size
    z = np.concatenate([pred1.ravel(), pred0.ravel(), rct.y1, rct.y0]).reshape(-1, 1)
    s, ds_da, acts = _critic_cached_forward(critic, z)
    sv = s.ravel()
    bounds = np.array([0, n1, n1 + n0, n1 + n0 + k1])
    sums = np.add.reduceat(sv, bounds)
    gap1 = sums[2] / k1 - sums[0] / n1
    gap0 = sums[3] / k0 - sums[1] / n0
    value = gap1 * gap1 + gap0 * gap0
    da = np.empty_like(sv)
    da[:n1] = 2.0 * gap1 / n1
    da[n1 : n1 + n0] = 2.0 * gap0 / n0
    da[n1 + n0 : n1 + n0 + k1] = -2.0 * gap1 / k1
    da[n1 + n0 + k1 :] = -2.0 * gap0 / k0
    da = (da * ds_da.ravel()).reshape(-1, 1)
    return value, _critic_backprop(critic, acts, da)


def _projection_ascent_step(critic, x_obs, pred1, pred0, rct, lam1, lam0):
    """Value of L_p and gradient of -L_p for the projection critic."""
    n, k1 = x_obs.shape[0], lam1.size
    stacked = np.concatenate([x_obs, x_obs[lam1], x_obs[lam0]], axis=0)
    s, ds_da, acts = _critic_cached_forward(critic, stacked)
    g = s.ravel()
    p1, p0 = pred1.ravel(), pred0.ravel()
    gap1 = (g[n : n + k1] * rct.y1).mean() - (g[:n] * p1).mean()
    gap0 = (g[n + k1 :] * rct.y0).mean() - (g[:n] * p0).mean()
    value = gap1 * gap1 + gap0 * gap0
    da = np.empty_like(g)
    da[:n] = 2.0 * (gap1 * p1 + gap0 * p0) / n
    da[n : n + k1] = -2.0 * gap1 * rct.y1 / k1
    da[n + k1 :] = -2.0 * gap0 * rct.y0 / lam0.size
    da = (da * ds_da.ravel()).reshape(-1, 1)
    return value, _critic_backprop(critic, acts, da)


def _critic_ascent(
    obs, rct, eta, generator, outcome, m_critic, p_critic,
    critic_opts, n_steps, config, pairing_rng, critic_rng, epoch,
):
    """Adversary steps on -(L_m + L_p); model parameters stay fixed.

    The critics are small fixed-form MLPs, so their gradients are computed
    directly in numpy instead of on a tape; the tape path is far too slow for
    the many inner steps this loop takes. Equivalence with the tape gradients
    is covered by the test suite. Each inner step draws a fresh minibatch of
    observational rows (capped at the training batch size), mirroring how the
    model side sees the data.
    """
    u_tilde = mlp_forward_np(generator, eta)
    pred0, pred1 = _predict_all_np(outcome, obs.x, u_tilde)
    cap = min(obs.n, config.batch_size)
    for _ in range(n_steps):
        if cap < obs.n:
            rows = critic_rng.integers(0, obs.n, size=cap)
            x_s, p1_s, p0_s = obs.x[rows], pred1[rows], pred0[rows]
        else:
            x_s, p1_s, p0_s = obs.x, pred1, pred0
        objective = 0.0
        grads_per_critic = []
        if m_critic is not None:
            lm, grads = _marginal_ascent_step(m_critic, p1_s, p0_s, rct)
            objective -= lm
            grads_per_critic.append(grads)
        if p_critic is not None:
            lam1 = draw_pairing(pairing_rng, cap, rct.y1.size)
            lam0 = draw_pairing(pairing_rng, cap, rct.y0.size)
            lp, grads = _projection_ascent_step(
                p_critic, x_s, p1_s, p0_s, rct, lam1, lam0
            )
            objective -= lp
            grads_per_critic.append(grads)
        if not np.isfinite(objective):
            raise TrainingDiverged(epoch)
        for grads, opt in zip(grads_per_critic, critic_opts):
            opt.step([grads])


# ---------------------------------------------------------------- inference


def _draw_u_tilde(model: TrainedModel, mc_samples: int, seed) -> np.ndarray:
    """Shared pseudo-confounder draws, shape (mc_samples,)."""
    if model.generator is None:
        return np.zeros(1)
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed, "inference")
    eta = rng.standard_normal((mc_samples, model.config.noise_dim))
    return mlp_forward_np(model.generator, eta).ravel()


def _mc_outcome(model: TrainedModel, x: np.ndarray, t: int, u_draws: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    t_block = np.full((n, 1), float(t))
    acc = np.zeros(n)
    for u in u_draws:
        inp = np.concatenate([x, np.full((n, 1), u), t_block], axis=1)
        acc += mlp_forward_np(model.outcome, inp).ravel()
    return acc / u_draws.size


def predict_potential_outcomes(
    model: TrainedModel, x: np.ndarray, t: int, mc_samples: int | None = None, seed: int = 0
) -> np.ndarray:
    """Monte-Carlo estimate of E[f_t(x, U~)] over fresh generator draws."""
    if t not in (0, 1):
        raise ValueError("t must be 0 or 1")
    mc = mc_samples if mc_samples is not None else model.config.mc_samples
    if mc < 1:
        raise ValueError("mc_samples must be >= 1")
    return _mc_outcome(model, x, t, _draw_u_tilde(model, mc, seed))


def predict_cate(
    model: TrainedModel, x: np.ndarray, mc_samples: int | None = None, seed: int = 0
) -> np.ndarray:
    """CATE estimate using pseudo-confounder draws shared across both arms."""
    mc = mc_samples if mc_samples is not None else model.config.mc_samples
    u_draws = _draw_u_tilde(model, mc, seed)
    return _mc_outcome(model, x, 1, u_draws) - _mc_outcome(model, x, 0, u_draws)


def predict_factual(
    model: TrainedModel, x: np.ndarray, t: np.ndarray, mc_samples: int | None = None, seed: int = 0
) -> np.ndarray:
    """Per-row prediction at the observed treatment."""
    mc = mc_samples if mc_samples is not None else model.config.mc_samples
    u_draws = _draw_u_tilde(model, mc, seed)
    p0 = _mc_outcome(model, x, 0, u_draws)
    p1 = _mc_outcome(model, x, 1, u_draws)
    t = np.asarray(t, dtype=np.float64).ravel()
    return t * p1 + (1.0 - t) * p0


# -------------------------------------------------------------- round trip


def save_model(directory, model: TrainedModel):
    """Write checkpoint + manifest + loss history; reload is bit-exact."""
    os.makedirs(directory, exist_ok=True)
    roles = {OUTCOME: model.outcome}
    if model.generator is not None:
        roles[GENERATOR] = model.generator
    if model.marginal_critic is not None:
        roles[MARGINAL_CRITIC] = model.marginal_critic
    if model.projection_critic is not None:
        roles[PROJECTION_CRITIC] = model.projection_critic
    networks.save_checkpoint(os.path.join(directory, "networks.npz"), roles)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"config": asdict(model.config)}, fh, indent=2, sort_keys=True)
    with open(os.path.join(directory, "history.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "factual", "marginal", "projection", "alpha"])
        for i, rec in enumerate(model.history):
            writer.writerow(
                [i, repr(rec.factual), repr(rec.marginal), repr(rec.projection), repr(rec.alpha)]
            )


def load_model(directory) -> TrainedModel:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        config = TrainConfig(**json.load(fh)["config"])
    roles = networks.load_checkpoint(os.path.join(directory, "networks.npz"))
    history = []
    with open(os.path.join(directory, "history.csv"), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            history.append(
                LossBreakdown(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            )
    return TrainedModel(
        config,
        roles.get(GENERATOR),
        roles[OUTCOME],
        roles.get(MARGINAL_CRITIC),
        roles.get(PROJECTION_CRITIC),
        history,
    )
