"""Loss components of the adversarial balancing objective.

Three ingredients, combined as  total = L_f + alpha * (L_m + L_p):

  - factual loss L_f: mean squared error of the treatment-selected prediction
    against the observed outcome;
  - marginal loss L_m: squared gap between the marginal critic's mean score on
    RCT outcomes and on predicted potential outcomes, summed over arms;
  - projection loss L_p: squared gap between mean g(x) * outcome products,
    where each covariate-free RCT outcome is paired with a uniformly drawn
    observational covariate row.

The critic objective is the negated regularizer -(L_m + L_p); the adversary
ascends the gaps that the model descends. The regularization weight alpha
follows a piecewise-linear schedule (flat, ramp, flat).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .datagen import RctOutcomes
from .networks import NetworkParams, critic_forward, mlp_forward_np


@dataclass
class LossBreakdown:
    """Scalar loss components recorded per epoch."""

    factual: float
    marginal: float
    projection: float
    alpha: float

    @property
    def total(self) -> float:
        return self.factual + self.alpha * (self.marginal + self.projection)


@dataclass(frozen=True)
class AlphaSchedule:
    """Flat at alpha_start, linear ramp, flat at alpha_end."""

    alpha_start: float = 0.01
    alpha_end: float = 100.0
    ramp_start_epoch: int = 1230
    ramp_end_epoch: int = 1430
    total_epochs: int = 2000

    def __post_init__(self):
        if not (0.0 < self.alpha_start <= self.alpha_end):
            raise ValueError("need 0 < alpha_start <= alpha_end")
        if not (0 <= self.ramp_start_epoch < self.ramp_end_epoch <= self.total_epochs):
            raise ValueError("need 0 <= ramp_start < ramp_end <= total_epochs")


def alpha_at(schedule: AlphaSchedule, epoch: int) -> float:
    if not (0 <= epoch < schedule.total_epochs):
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    if epoch < schedule.ramp_start_epoch:
        return schedule.alpha_start
    if epoch >= schedule.ramp_end_epoch:
        return schedule.alpha_end
    frac = (epoch - schedule.ramp_start_epoch) / (
        schedule.ramp_end_epoch - schedule.ramp_start_epoch
    )
    return schedule.alpha_start + frac * (schedule.alpha_end - schedule.alpha_start)


# ----------------------------------------------------------------- losses


def factual_loss(tape: Tape, y: np.ndarray, yhat_factual: Tensor) -> Tensor:
    """Mean squared error of the treatment-selected predictions."""
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if y.size == 0:
        raise ValueError("factual loss on an empty batch")
    resid = tape.sub(tape.const(y), yhat_factual)
    return tape.mean(tape.square(resid))


def _arm_gap_sq(tape, critic, rct_values, pred_scores_mean):
    rct_scores = critic_forward(tape, critic, tape.const(rct_values.reshape(-1, 1)))
    gap = tape.sub(tape.mean(rct_scores), pred_scores_mean)
    return tape.square(gap)


def marginal_loss(
    tape: Tape,
    pred_y1: Tensor,
    pred_y0: Tensor,
    rct: RctOutcomes,
    critic: NetworkParams,
    frozen_critic: bool = False,
) -> Tensor:
    """Squared gap of mean critic scores between RCT and predicted outcomes.

    With frozen_critic=True the critic enters the graph as a constant: the
    RCT-side mean score is precomputed in plain numpy and no gradient
    accumulates for the critic parameters. Loss values are unchanged.
    """
    if rct.y1.size == 0 or rct.y0.size == 0:
        raise ValueError("marginal loss requires both RCT arms non-empty")
    if frozen_critic:
        def arm(rct_values, pred):
            rct_mean = mlp_forward_np(critic, rct_values.reshape(-1, 1)).mean()
            pred_mean = tape.mean(critic_forward(tape, critic, pred, frozen=True))
            return tape.square(tape.sub(tape.const(rct_mean), pred_mean))

        return tape.add(arm(rct.y1, pred_y1), arm(rct.y0, pred_y0))
    term1 = _arm_gap_sq(
        tape, critic, rct.y1, tape.mean(critic_forward(tape, critic, pred_y1))
    )
    term0 = _arm_gap_sq(
        tape, critic, rct.y0, tape.mean(critic_forward(tape, critic, pred_y0))
    )
    return tape.add(term1, term0)


def draw_pairing(rng: np.random.Generator, n_obs: int, n_rct: int) -> np.ndarray:
    """Uniform-with-replacement observational row index per RCT outcome."""
    return rng.integers(0, n_obs, size=n_rct)


def projection_loss(
    tape: Tape,
    x_obs: np.ndarray,
    pred_y1: Tensor,
    pred_y0: Tensor,
    rct: RctOutcomes,
    critic: NetworkParams,
    pairing_rng: np.random.Generator | None = None,
    pairing: tuple[np.ndarray, np.ndarray] | None = None,
    frozen_critic: bool = False,
) -> Tensor:
    """Squared gap of mean g(x) * outcome products, per arm.

    RCT outcomes carry no covariates, so each is paired with a random
    observational row; averaging the product over pairings is an unbiased
    estimate of E[g(X)] * E[Y'_t].

    With frozen_critic=True all critic scores are precomputed constants, so
    only the predictions carry gradient. Loss values are unchanged.
    """
    x_obs = np.asarray(x_obs, dtype=np.float64)
    n_obs = x_obs.shape[0]
    if n_obs == 0:
        raise ValueError("projection loss requires a non-empty observational batch")
    if pairing is None:
        if pairing_rng is None:
            raise ValueError("either pairing_rng or explicit pairing is required")
        pairing = (
            draw_pairing(pairing_rng, n_obs, rct.y1.size),
            draw_pairing(pairing_rng, n_obs, rct.y0.size),
        )
    lam_by_arm = {1: pairing[0], 0: pairing[1]}
    if frozen_critic:
        g_obs_np = mlp_forward_np(critic, x_obs)

        def frozen_arm_term(arm, rct_y, pred):
            lam = lam_by_arm[arm]
            rct_side = (mlp_forward_np(critic, x_obs[lam]) * rct_y.reshape(-1, 1)).mean()
            obs_side = tape.mean(tape.mul(tape.const(g_obs_np), pred))
            return tape.square(tape.sub(tape.const(rct_side), obs_side))

        return tape.add(
            frozen_arm_term(1, rct.y1, pred_y1), frozen_arm_term(0, rct.y0, pred_y0)
        )
    g_obs = critic_forward(tape, critic, tape.const(x_obs))

    def arm_term(arm, rct_y, pred):
        lam = lam_by_arm[arm]
        g_pairs = critic_forward(tape, critic, tape.const(x_obs[lam]))
        rct_side = tape.mean(tape.mul(g_pairs, tape.const(rct_y.reshape(-1, 1))))
        obs_side = tape.mean(tape.mul(g_obs, pred))
        return tape.square(tape.sub(rct_side, obs_side))

    return tape.add(arm_term(1, rct.y1, pred_y1), arm_term(0, rct.y0, pred_y0))


def critic_objective(tape: Tape, marginal: Tensor | None, projection: Tensor | None) -> Tensor:
    """Negated regularizer -(L_m + L_p); ascending it widens the gaps."""
    if marginal is None and projection is None:
        raise ValueError("critic objective needs at least one balancing loss")
    if marginal is None:
        combined = projection
    elif projection is None:
        combined = marginal
    else:
        combined = tape.add(marginal, projection)
    return tape.scale(combined, -1.0)
