"""Data sources: synthetic DGPs, outcome-only RCT sampling, CSV ingestion.

Two synthetic data generating processes carry analytic oracles:

  - CaseStudyDgp: linear-Gaussian model. X ~ N(1.0, 0.04), U ~ N(0, 1),
    P(T=1|X,U) = logistic(0.5 X + 2 U), Y1 = -3.5 X + 3 U, Y0 = 4.5 X - 0.6 U.
    Hence E[Y1|X] = -3.5 X, E[Y0|X] = 4.5 X and the true CATE is -8 X.

  - MsmDgp: sensitivity-model construction. U ~ Bern(1/2), X ~ Unif[-2, 2],
    nominal propensity e(x) = logistic(0.75 x + 0.5), complete propensity set
    so the treatment odds ratio across u attains the extremal bounds for a
    given sensitivity parameter gamma >= 1. The outcome has a nonlinear CATE:
    Y_t = (2t-1)X + 2(2t-1) - 2 sin(2(2t-1)X) - 2(2U-1)(1 + 0.5X) + eps.

The module also provides the confounding-injection filter that keeps only
low-outcome controls and high-outcome treated units, the covariate-based
RCT split, and CSV load/save with fit-once standardization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class OracleBlock:
    """Synthetic ground truth carried alongside observed triplets."""

    u: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    mu0: np.ndarray  # E[Y0 | X] at each row
    mu1: np.ndarray  # E[Y1 | X] at each row
    cate: np.ndarray


@dataclass
class TabularDataset:
    x: np.ndarray  # (n, d)
    t: np.ndarray  # (n,), values in {0, 1}
    y: np.ndarray  # (n,)
    oracle: Optional[OracleBlock] = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        if self.x.shape[0] == 1 and np.asarray(self.t).size > 1:
            self.x = self.x.T
        self.t = np.asarray(self.t, dtype=np.float64).ravel()
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if not (self.x.shape[0] == self.t.size == self.y.size):
            raise DataError("x, t, y row counts disagree")
        if not np.all(np.isin(self.t, (0.0, 1.0))):
            raise DataError("treatment column must be binary")

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "TabularDataset":
        oracle = None
        if self.oracle is not None:
            oracle = OracleBlock(
                self.oracle.u[idx],
                self.oracle.y0[idx],
                self.oracle.y1[idx],
                self.oracle.mu0[idx],
                self.oracle.mu1[idx],
                self.oracle.cate[idx],
            )
        return TabularDataset(self.x[idx], self.t[idx], self.y[idx], oracle)


@dataclass
class RctOutcomes:
    """Outcome-only randomized samples, one list per treatment arm."""

    y1: np.ndarray
    y0: np.ndarray
    treated_prob: float

    def __post_init__(self):
        self.y1 = np.asarray(self.y1, dtype=np.float64).ravel()
        self.y0 = np.asarray(self.y0, dtype=np.float64).ravel()
        if not (0.0 < self.treated_prob < 1.0):
            raise DataError("treated-arm probability must lie in (0, 1)")
        if not (np.all(np.isfinite(self.y1)) and np.all(np.isfinite(self.y0))):
            raise DataError("RCT outcomes must be finite")

    @property
    def n(self) -> int:
        return self.y1.size + self.y0.size


def logistic(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


# ------------------------------------------------------------ case study


class CaseStudyDgp:
    """Linear-Gaussian model with a strong continuous hidden confounder."""

    name = "case-study"
    covariate_dim = 1

    def conditional_mean(self, t: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return -3.5 * x if t == 1 else 4.5 * x

    def true_cate(self, x: np.ndarray) -> np.ndarray:
        return -8.0 * np.asarray(x, dtype=np.float64).reshape(-1)

    def sample_covariates(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(1.0, 0.2, size=(n, 1))

    def sample(self, n: int, seed) -> TabularDataset:
        if n < 2:
            raise DataError("need at least 2 samples")
        rng = np.random.default_rng(seed)
        x = self.sample_covariates(n, rng)
        u = rng.normal(0.0, 1.0, size=n)
        propensity = logistic(0.5 * x[:, 0] + 2.0 * u)
        t = (rng.uniform(size=n) < propensity).astype(np.float64)
        y1 = -3.5 * x[:, 0] + 3.0 * u
        y0 = 4.5 * x[:, 0] - 0.6 * u
        y = t * y1 + (1.0 - t) * y0
        oracle = OracleBlock(
            u, y0, y1, 4.5 * x[:, 0], -3.5 * x[:, 0], self.true_cate(x[:, 0])
        )
        return TabularDataset(x, t, y, oracle)

    def sample_outcomes(self, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.normal(1.0, 0.2, size=n)
        u = rng.normal(0.0, 1.0, size=n)
        return -3.5 * x + 3.0 * u if t == 1 else 4.5 * x - 0.6 * u


# -------------------------------------------------------------- MSM model


def nominal_propensity(x) -> np.ndarray:
    """Treatment probability given covariates alone: logistic(0.75 x + 0.5)."""
    return logistic(0.75 * np.asarray(x, dtype=np.float64) + 0.5)


def complete_propensity(x, u, gamma: float) -> np.ndarray:
    """Treatment probability given (x, u), attaining the extremal
    sensitivity-model bounds at the given gamma.

    The inverse propensity interpolates the classical bounds on 1/e(x,u):
    1/e(x,u) = u * alpha(x) + (1-u) * beta(x) with
    alpha = 1/(gamma e(x)) + 1 - 1/gamma and beta = gamma/e(x) + 1 - gamma.
    At gamma = 1 both arms reduce to the nominal propensity.
    """
    if gamma < 1.0:
        raise DataError("gamma must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    e = nominal_propensity(x)
    alpha = 1.0 / (gamma * e) + 1.0 - 1.0 / gamma
    beta = gamma / e + 1.0 - gamma
    inv = u * alpha + (1.0 - u) * beta
    return 1.0 / inv


class MsmDgp:
    """One-dimensional nonlinear-CATE model with tunable confounding degree.

    With `confounded=False` the treatment is drawn from the nominal
    propensity only, so U still moves the outcome but is no longer a
    confounder (the unconfounded variant used by the observational oracle).
    """

    covariate_dim = 1

    def __init__(self, gamma: float = 1.0, confounded: bool = True):
        if gamma < 1.0:
            raise DataError("gamma must be >= 1")
        self.gamma = float(gamma)
        self.confounded = bool(confounded)

    @property
    def name(self) -> str:
        return "msm"

    def conditional_mean(self, t: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        s = 2.0 * t - 1.0
        return s * x + 2.0 * s - 2.0 * np.sin(2.0 * s * x)

    def true_cate(self, x: np.ndarray) -> np.ndarray:
        return self.conditional_mean(1, x) - self.conditional_mean(0, x)

    def sample_covariates(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-2.0, 2.0, size=(n, 1))

    def _potential_outcome(self, t, x, u, eps):
        s = 2.0 * np.asarray(t, dtype=np.float64) - 1.0
        return (
            s * x
            + 2.0 * s
            - 2.0 * np.sin(2.0 * s * x)
            - 2.0 * (2.0 * u - 1.0) * (1.0 + 0.5 * x)
            + eps
        )

    def sample(self, n: int, seed) -> TabularDataset:
        if n < 2:
            raise DataError("need at least 2 samples")
        rng = np.random.default_rng(seed)
        x = self.sample_covariates(n, rng)
        u = (rng.uniform(size=n) < 0.5).astype(np.float64)
        if self.confounded:
            p = complete_propensity(x[:, 0], u, self.gamma)
        else:
            p = nominal_propensity(x[:, 0])
        t = (rng.uniform(size=n) < p).astype(np.float64)
        # noise drawn independently per potential outcome
        y0 = self._potential_outcome(0, x[:, 0], u, rng.normal(size=n))
        y1 = self._potential_outcome(1, x[:, 0], u, rng.normal(size=n))
        y = t * y1 + (1.0 - t) * y0
        oracle = OracleBlock(
            u,
            y0,
            y1,
            self.conditional_mean(0, x[:, 0]),
            self.conditional_mean(1, x[:, 0]),
            self.true_cate(x[:, 0]),
        )
        return TabularDataset(x, t, y, oracle)

    def sample_outcomes(self, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.uniform(-2.0, 2.0, size=n)
        u = (rng.uniform(size=n) < 0.5).astype(np.float64)
        return self._potential_outcome(t, x, u, rng.normal(size=n))


def gen_case_study(n: int, seed) -> TabularDataset:
    return CaseStudyDgp().sample(n, seed)


def gen_msm(n: int, gamma: float, seed) -> TabularDataset:
    return MsmDgp(gamma).sample(n, seed)


# ------------------------------------------------------------ RCT sampling


def gen_rct_outcomes(
    dgp, n_r: int, u: float, seed, require_both_arms: bool = True, max_retries: int = 100
) -> RctOutcomes:
    """Draw outcome-only randomized samples from the DGP's marginal laws.

    Each record lands in the treated arm with probability `u`; the outcome is
    a fresh draw of that arm's potential outcome (covariates discarded). With
    `require_both_arms` the draw is repeated until neither arm is empty.
    """
    if n_r < 2:
        raise DataError("need at least 2 RCT samples")
    if not (0.0 < u < 1.0):
        raise DataError("treated-arm probability must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        arms = (rng.uniform(size=n_r) < u).astype(int)
        n1 = int(arms.sum())
        n0 = n_r - n1
        if n1 > 0 and n0 > 0:
            y1 = dgp.sample_outcomes(1, n1, rng)
            y0 = dgp.sample_outcomes(0, n0, rng)
            return RctOutcomes(y1, y0, u)
        if not require_both_arms:
            y1 = dgp.sample_outcomes(1, n1, rng) if n1 else np.empty(0)
            y0 = dgp.sample_outcomes(0, n0, rng) if n0 else np.empty(0)
            return RctOutcomes(y1, y0, u)
    raise DataError(f"failed to populate both RCT arms after {max_retries} draws")


# --------------------------------------------------- confounding injection


def inject_confounding(dataset: TabularDataset, c: float) -> TabularDataset:
    """Keep only low-outcome controls and high-outcome treated units.

    Controls survive when y < mean(Y|T=0) - c * sd(Y|T=0); treated units when
    y > mean(Y|T=1) + c * sd(Y|T=1). The filter manufactures outcome-based
    selection, so the result violates conditional unconfoundedness.
    """
    if c < 0:
        raise DataError("c must be >= 0")
    t, y = dataset.t, dataset.y
    for arm in (0, 1):
        if not np.any(t == arm):
            raise DataError(f"input dataset has empty arm t={arm}")
    mean0, sd0 = y[t == 0].mean(), y[t == 0].std()
    mean1, sd1 = y[t == 1].mean(), y[t == 1].std()
    keep = ((t == 0) & (y < mean0 - c * sd0)) | ((t == 1) & (y > mean1 + c * sd1))
    for arm, thresh in ((0, mean0 - c * sd0), (1, mean1 + c * sd1)):
        if not np.any(keep & (t == arm)):
            raise DataError(
                f"confounding filter emptied arm t={arm} (threshold {thresh:.6g})"
            )
    return dataset.subset(keep)


def split_rct_by_covariate(
    dataset: TabularDataset,
    column: int,
    rule: Callable[[np.ndarray], np.ndarray],
    n_rct: int,
    treated_prob: Optional[float] = None,
    seed=0,
) -> tuple[RctOutcomes, TabularDataset]:
    """Carve an outcome-only RCT out of the observational pool.

    `rule` maps the selected covariate column to a boolean mask of candidate
    rows; `n_rct` of them (a seeded draw, or all of them when the predicate
    matches exactly `n_rct`) move to the RCT side, keeping only (t, y). The
    remainder stays observational; no row appears on both sides.
    """
    if not (0 <= column < dataset.d):
        raise DataError(f"column {column} out of range for d={dataset.d}")
    mask = np.asarray(rule(dataset.x[:, column]), dtype=bool)
    candidates = np.flatnonzero(mask)
    if candidates.size < n_rct:
        raise DataError(
            f"predicate matches {candidates.size} rows, fewer than n_rct={n_rct}"
        )
    if candidates.size == n_rct:
        chosen = candidates
    else:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(candidates, size=n_rct, replace=False)
    chosen_set = np.zeros(dataset.n, dtype=bool)
    chosen_set[chosen] = True
    rct_rows = dataset.subset(chosen_set)
    y1 = rct_rows.y[rct_rows.t == 1]
    y0 = rct_rows.y[rct_rows.t == 0]
    if y1.size == 0 or y0.size == 0:
        raise DataError("RCT split produced an empty arm")
    if treated_prob is None:
        treated_prob = y1.size / n_rct
    return RctOutcomes(y1, y0, treated_prob), dataset.subset(~chosen_set)


# ------------------------------------------------------------------- CSV


def save_csv(path, dataset: TabularDataset):
    """Write the observational CSV schema: header x1,...,xd,t,y."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(dataset.d)] + ["t", "y"])
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.x[i]]
            row.append(str(int(dataset.t[i])))
            row.append(repr(float(dataset.y[i])))
            writer.writerow(row)


def load_csv(path) -> TabularDataset:
    """Parse the observational CSV schema, reporting bad rows by line number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        d = len(header) - 2
        expected = [f"x{i + 1}" for i in range(d)] + ["t", "y"]
        if d < 1 or header != expected:
            raise DataError(f"{path}: header {header} does not match x1..xd,t,y")
        xs, ts, ys = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 2:
                raise DataError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
            try:
                xs.append([float(v) for v in row[:d]])
                t = float(row[d])
                ys.append(float(row[d + 1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if t not in (0.0, 1.0):
                raise DataError(f"{path}:{lineno}: non-binary treatment {row[d]!r}")
            ts.append(t)
    if not ts:
        raise DataError(f"{path}: no data rows")
    return TabularDataset(np.array(xs), np.array(ts), np.array(ys))


def load_rct_csv(path, treated_prob: Optional[float] = None) -> RctOutcomes:
    """Parse the RCT CSV schema: header t,y."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "y"]:
            raise DataError(f"{path}: header {header} does not match t,y")
        y1, y0 = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields")
            try:
                t, y = float(row[0]), float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if t == 1.0:
                y1.append(y)
            elif t == 0.0:
                y0.append(y)
            else:
                raise DataError(f"{path}:{lineno}: non-binary treatment {row[0]!r}")
    if not y1 or not y0:
        raise DataError(f"{path}: an RCT arm is empty")
    if treated_prob is None:
        treated_prob = len(y1) / (len(y1) + len(y0))
    return RctOutcomes(np.array(y1), np.array(y0), treated_prob)


def save_rct_csv(path, rct: RctOutcomes):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for y in rct.y1:
            writer.writerow(["1", repr(float(y))])
        for y in rct.y0:
            writer.writerow(["0", repr(float(y))])


@dataclass
class Standardizer:
    """Per-column affine transform fitted once and reusable on later splits."""

    columns: tuple[int, ...]
    means: np.ndarray
    sds: np.ndarray

    def apply(self, dataset: TabularDataset) -> TabularDataset:
        x = dataset.x.copy()
        for col, m, s in zip(self.columns, self.means, self.sds):
            x[:, col] = (x[:, col] - m) / s
        return replace(dataset, x=x)


def standardize(
    dataset: TabularDataset, columns=None
) -> tuple[TabularDataset, Standardizer]:
    """Center and scale the given columns using this dataset's mean/sd."""
    if columns is None:
        columns = tuple(range(dataset.d))
    columns = tuple(columns)
    means = np.array([dataset.x[:, c].mean() for c in columns])
    sds = np.array([dataset.x[:, c].std() for c in columns])
    for c, s in zip(columns, sds):
        if s == 0.0:
            raise DataError(f"column {c} is constant; cannot standardize")
    std = Standardizer(columns, means, sds)
    return std.apply(dataset), std
