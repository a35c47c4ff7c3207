"""Metrics and theorem-backed oracles.

Beyond the two headline metrics (root PEHE against a synthetic CATE oracle and
held-out factual MSE), this module implements three independent verification
devices on fully enumerable discrete instances:

  - ideal_pb_oracle: solves the projection-constrained least-squares problem
    exactly with indicator critics and checks that its unique minimizer is the
    tabulated conditional mean of each potential outcome;
  - mb_counterexample_check: exact rational arithmetic on the 4-cell instance
    showing distribution matching alone does not pin down conditional means;
  - exact_pb_bound_check: the closed-form supremum of the projection gap over
    sign critics, used to verify the error bound
    E|Z_t - E[Y_t|X]| <= L_p(Z_t) + sd(Y_t) on arbitrary candidates.

On continuous data the supremum has no closed form, so only a documented
lower-bound diagnostic (an adversarially trained critic) is reported there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .autodiff import Adam, Tape
from .datagen import RctOutcomes, TabularDataset
from .networks import (
    PROJECTION_CRITIC,
    critic_forward,
    init_params,
    projection_critic_architecture,
)
from .trainer import TrainedModel, predict_factual, predict_potential_outcomes

METRICS_HEADER = "run_id,method,dgp,gamma,n_obs,n_rct,seed,sqrt_pehe,factual_mse,lp_diag"


@dataclass
class MetricsRecord:
    run_id: str
    method: str
    dgp: str
    gamma: Optional[float]
    n_obs: int
    n_rct: int
    seed: int
    sqrt_pehe: Optional[float]
    factual_mse: Optional[float]
    lp_diag: Optional[float] = None

    def csv_row(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(float(v))

        return [
            self.run_id,
            self.method,
            self.dgp,
            num(self.gamma),
            str(self.n_obs),
            str(self.n_rct),
            str(self.seed),
            num(self.sqrt_pehe),
            num(self.factual_mse),
            num(self.lp_diag),
        ]


def write_metrics_csv(path, records: list[MetricsRecord]):
    """Deterministic metrics CSV; rows sorted by run id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER.split(","))
        for rec in sorted(records, key=lambda r: r.run_id):
            writer.writerow(rec.csv_row())


# ----------------------------------------------------------------- metrics


def sqrt_pehe(
    model: TrainedModel,
    eval_covariates: np.ndarray,
    true_cate: np.ndarray,
    mc_samples: int | None = None,
    seed: int = 0,
) -> float:
    """Root mean squared CATE error over an i.i.d. evaluation sample."""
    x = np.atleast_2d(np.asarray(eval_covariates, dtype=np.float64))
    true_cate = np.asarray(true_cate, dtype=np.float64).ravel()
    if x.shape[0] == 0:
        raise ValueError("empty evaluation set")
    from .trainer import predict_cate

    tau_hat = predict_cate(model, x, mc_samples, seed)
    return float(np.sqrt(np.mean((tau_hat - true_cate) ** 2)))


def factual_error(
    model: TrainedModel, heldout: TabularDataset, mc_samples: int | None = None, seed: int = 0
) -> float:
    """MSE of factual predictions on a held-out observational split."""
    if heldout.n == 0:
        raise ValueError("empty held-out split")
    pred = predict_factual(model, heldout.x, heldout.t, mc_samples, seed)
    return float(np.mean((pred - heldout.y) ** 2))


# ------------------------------------------------------ discrete instances


@dataclass
class DiscreteInstance:
    """Fully tabulated joint law of (X, U, T, Y0, Y1) on finitely many atoms."""

    probs: np.ndarray
    x: np.ndarray
    t: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64)
        self.y0 = np.asarray(self.y0, dtype=np.float64)
        self.y1 = np.asarray(self.y1, dtype=np.float64)
        if not np.isclose(self.probs.sum(), 1.0, atol=1e-12):
            raise ValueError("atom probabilities must sum to 1")
        if np.any(self.probs <= 0):
            raise ValueError("atoms must have positive probability")

    @property
    def support(self) -> np.ndarray:
        return np.unique(self.x)

    def y(self, t: int) -> np.ndarray:
        return self.y1 if t == 1 else self.y0

    def p_x(self, xv: float) -> float:
        return float(self.probs[self.x == xv].sum())

    def conditional_mean(self, t: int, xv: float) -> float:
        mask = self.x == xv
        return float((self.probs[mask] * self.y(t)[mask]).sum() / self.probs[mask].sum())

    def mean_y(self, t: int) -> float:
        return float((self.probs * self.y(t)).sum())

    def sd_y(self, t: int) -> float:
        m = self.mean_y(t)
        return float(np.sqrt((self.probs * (self.y(t) - m) ** 2).sum()))

    def check_positivity(self):
        for xv in self.support:
            mask = self.x == xv
            p1 = self.probs[mask & (self.t == 1)].sum()
            p0 = self.probs[mask & (self.t == 0)].sum()
            if p1 <= 0 or p0 <= 0:
                raise ValueError(f"positivity violated at x={xv}")


def random_discrete_instance(rng: np.random.Generator, max_support: int = 8) -> DiscreteInstance:
    """Random instance with positivity: both arms present at every x point."""
    k = int(rng.integers(2, max_support + 1))
    xs = np.sort(rng.choice(np.arange(-10, 11), size=k, replace=False)).astype(float)
    probs, xcol, tcol, y0col, y1col = [], [], [], [], []
    raw = rng.uniform(0.2, 1.0, size=(k, 2))  # mass per (x, t) cell
    raw /= raw.sum()
    for j, xv in enumerate(xs):
        # split each cell over a random binary hidden variable
        for t in (0, 1):
            for frac in np.ravel(rng.dirichlet([1.0, 1.0])):
                probs.append(raw[j, t] * frac)
                xcol.append(xv)
                tcol.append(float(t))
                y0col.append(rng.normal(scale=3.0))
                y1col.append(rng.normal(scale=3.0))
    probs = np.array(probs)
    probs /= probs.sum()
    inst = DiscreteInstance(probs, np.array(xcol), np.array(tcol), np.array(y0col), np.array(y1col))
    inst.check_positivity()
    return inst


# ------------------------------------------------------- ideal PB oracle


@dataclass
class IdealPbSolution:
    support: np.ndarray
    z0: np.ndarray
    z1: np.ndarray
    max_deviation: float  # from tabulated conditional means
    unique: bool


def ideal_pb_oracle(instance: DiscreteInstance, tol: float = 1e-10) -> IdealPbSolution:
    """Solve the projection-constrained factual least-squares problem exactly.

    Variables are the per-support-point values Z_t(x). The critic class is
    instantiated by the indicator of each support point, which on a discrete
    instance exhausts the constraint's content. The KKT system is solved with
    dense linear algebra; uniqueness holds because the constraint matrix has
    full column rank (positivity), making the feasible set a single point.
    """
    instance.check_positivity()
    xs = instance.support
    k = xs.size
    nvar = 2 * k  # z ordering: [Z_0(x_1..x_k), Z_1(x_1..x_k)]

    q = np.zeros(nvar)
    b = np.zeros(nvar)
    for a in range(instance.probs.size):
        j = int(np.searchsorted(xs, instance.x[a]))
        t = int(instance.t[a])
        y_fact = instance.y1[a] if t == 1 else instance.y0[a]
        q[t * k + j] += instance.probs[a]
        b[t * k + j] += instance.probs[a] * y_fact

    # indicator-critic constraints: p(x_j) * Z_t(x_j) = E[Y_t 1{X = x_j}]
    amat = np.zeros((nvar, nvar))
    c = np.zeros(nvar)
    for t in (0, 1):
        for j, xv in enumerate(xs):
            mask = instance.x == xv
            amat[t * k + j, t * k + j] = instance.probs[mask].sum()
            c[t * k + j] = (instance.probs[mask] * instance.y(t)[mask]).sum()

    kkt = np.block([[2.0 * np.diag(q), amat.T], [amat, np.zeros((nvar, nvar))]])
    rhs = np.concatenate([2.0 * b, c])
    sol = np.linalg.solve(kkt, rhs)
    z = sol[:nvar]

    # uniqueness: the reduced problem on the constraint null space must be
    # positive definite; with a full-rank A the null space is trivial.
    svals = np.linalg.svd(amat, compute_uv=False)
    unique = bool(svals.min() > 1e-12)

    expected = np.array(
        [instance.conditional_mean(t, xv) for t in (0, 1) for xv in xs]
    )
    max_dev = float(np.max(np.abs(z - expected)))
    if max_dev > tol:
        raise AssertionError(
            f"constrained minimizer deviates from conditional means by {max_dev:g}"
        )
    return IdealPbSolution(xs, z[:k], z[k:], max_dev, unique)


# ------------------------------------------- marginal-matching counterexample


@dataclass
class MbCounterexampleVerdict:
    constraint_satisfied: bool
    objective_at_construction: Fraction
    objective_at_conditional_means: Fraction
    per_arm_term_at_means: Fraction
    non_unique: bool


def mb_counterexample_check() -> MbCounterexampleVerdict:
    """Exact-arithmetic check that distribution matching is not sufficient.

    Hard-coded instance: X ~ Ber(1/2) and T ~ Ber(1/2) independent, and
    Y0 = Y1 = (1-T) X + T (1-X). The pair (Y~0, Y~1) = (X, 1-X) matches both
    marginal laws yet gives objective exactly 0, while the true conditional
    means (both 1/2) incur a strictly positive objective of 1/8 per arm term.
    """
    half = Fraction(1, 2)
    quarter = Fraction(1, 4)
    cells = [(x, t) for x in (0, 1) for t in (0, 1)]  # each with mass 1/4

    def outcome(x, t):
        return Fraction((1 - t) * x + t * (1 - x))

    # marginal laws as exact distributions over values
    def law(values_with_mass):
        dist = {}
        for v, p in values_with_mass:
            dist[v] = dist.get(v, Fraction(0)) + p
        return dist

    law_y = law([(outcome(x, t), quarter) for x, t in cells])  # Y0 = Y1 pointwise
    law_cand0 = law([(Fraction(x), half) for x in (0, 1)])  # Y~0 = X
    law_cand1 = law([(Fraction(1 - x), half) for x in (0, 1)])  # Y~1 = 1 - X
    constraint_ok = law_cand0 == law_y and law_cand1 == law_y

    def objective(z0_of_x, z1_of_x):
        # E[(1-T)(Z0(X) - Y0)^2 + T(Z1(X) - Y1)^2]
        total = Fraction(0)
        for x, t in cells:
            y = outcome(x, t)
            if t == 0:
                total += quarter * (z0_of_x(x) - y) ** 2
            else:
                total += quarter * (z1_of_x(x) - y) ** 2
        return total

    def arm_term_at_means(arm):
        total = Fraction(0)
        for x, t in cells:
            if t == arm:
                total += quarter * (half - outcome(x, t)) ** 2
        return total

    obj_construction = objective(lambda x: Fraction(x), lambda x: Fraction(1 - x))
    obj_means = objective(lambda x: half, lambda x: half)
    per_arm = arm_term_at_means(0)
    assert per_arm == arm_term_at_means(1)

    return MbCounterexampleVerdict(
        constraint_satisfied=constraint_ok,
        objective_at_construction=obj_construction,
        objective_at_conditional_means=obj_means,
        per_arm_term_at_means=per_arm,
        non_unique=constraint_ok
        and obj_construction == 0
        and obj_means > obj_construction,
    )


# ----------------------------------------------------- exact PB bound check


@dataclass
class PbBoundResult:
    lhs: tuple[float, float]  # E|Z_t - E[Y_t|X]| per arm
    lp: tuple[float, float]  # exact sup over sign critics per arm
    rhs: tuple[float, float]
    slack: tuple[float, float]

    @property
    def holds(self) -> bool:
        return all(s >= -1e-9 for s in self.slack)


def exact_pb_bound_check(instance: DiscreteInstance, z0, z1) -> PbBoundResult:
    """Verify E|Z_t - E[Y_t|X]| <= L_p(Z_t) + sd(Y_t) on a discrete instance.

    With Y'_t independent of X, E[Y'_t g(X)] = E[Y_t] E[g(X)], so the supremum
    over g: X -> [-1, 1] is attained by a per-point sign critic and equals
    sum_x p(x) |Z_t(x) - E[Y_t]| exactly.
    """
    xs = instance.support
    z = {0: np.asarray(z0, dtype=np.float64), 1: np.asarray(z1, dtype=np.float64)}
    for t in (0, 1):
        if z[t].shape != xs.shape:
            raise ValueError("candidate Z must give one value per support point")
    px = np.array([instance.p_x(xv) for xv in xs])
    lhs, lp, rhs, slack = [], [], [], []
    for t in (0, 1):
        cond = np.array([instance.conditional_mean(t, xv) for xv in xs])
        lhs_t = float((px * np.abs(z[t] - cond)).sum())
        lp_t = float((px * np.abs(z[t] - instance.mean_y(t))).sum())
        rhs_t = lp_t + instance.sd_y(t)
        lhs.append(lhs_t)
        lp.append(lp_t)
        rhs.append(rhs_t)
        slack.append(rhs_t - lhs_t)
    return PbBoundResult(tuple(lhs), tuple(lp), tuple(rhs), tuple(slack))


# ------------------------------------------------- continuous L_p diagnostic


def empirical_lp_diagnostic(
    model: TrainedModel,
    obs: TabularDataset,
    rct: RctOutcomes,
    critic_budget: int = 200,
    seed: int = 0,
    mc_samples: int | None = None,
) -> float:
    """Adversarial lower-bound estimate of the projection gap L_p.

    Trains a fresh bounded critic to maximize the absolute gap
    |E[Z_t g(X)] - E[Y'_t] E[g(X)]| summed over arms, and reports the largest
    per-arm gap reached. This is a lower bound on the true supremum; it is
    never used to assert the error bound on continuous instances.
    """
    rng = np.random.default_rng(seed)
    critic = init_params(projection_critic_architecture(obs.d), rng, PROJECTION_CRITIC)
    opt = Adam(critic.flat_arrays(), 0.001)
    z1 = predict_potential_outcomes(model, obs.x, 1, mc_samples, seed).reshape(-1, 1)
    z0 = predict_potential_outcomes(model, obs.x, 0, mc_samples, seed).reshape(-1, 1)
    mean_rct = {1: float(rct.y1.mean()), 0: float(rct.y0.mean())}
    best = 0.0
    arrays = critic.flat_arrays()
    for _ in range(critic_budget):
        tape = Tape()
        g_obs = critic_forward(tape, critic, tape.const(obs.x))
        gaps = []
        for t, zhat in ((1, z1), (0, z0)):
            obs_side = tape.mean(tape.mul(g_obs, tape.const(zhat)))
            rct_side = tape.scale(tape.mean(g_obs), mean_rct[t])
            gaps.append(tape.absval(tape.sub(obs_side, rct_side)))
        best = max(best, float(gaps[0].data), float(gaps[1].data))
        objective = tape.scale(tape.add(gaps[0], gaps[1]), -1.0)
        tape.backward(objective)
        opt.step([tape.grad_for(a) for a in arrays])
    return best
