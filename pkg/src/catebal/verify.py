"""Release-gate checks: gradient suite and the theorem-backed oracle suites.

Each check returns a CheckResult with a pass/fail verdict, a one-line detail,
and its runtime; `run_all_checks` aggregates them for the `verify` command.
The gradient suite compares every analytic parameter gradient of the full
combined loss against central finite differences on randomly drawn network
sizes, data, and regularization weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tape
from .balancing import factual_loss, marginal_loss, projection_loss
from .datagen import RctOutcomes
from .evaluation import (
    exact_pb_bound_check,
    ideal_pb_oracle,
    mb_counterexample_check,
    random_discrete_instance,
)
from .networks import (
    GENERATOR,
    MARGINAL_CRITIC,
    OUTCOME,
    PROJECTION_CRITIC,
    Architecture,
    NetworkParams,
    generator_forward,
    init_params,
    outcome_forward,
)

REL_TOL = 1e-4
ABS_FLOOR = 1e-7


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    runtime_s: float


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    start = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crashed check is a failed check
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name, passed, detail, time.perf_counter() - start)


# ------------------------------------------------------------ gradient suite


def _random_networks(rng: np.random.Generator):
    d = int(rng.integers(1, 4))
    l = int(rng.integers(1, 4))
    h = int(rng.integers(2, 7))
    gen = init_params(Architecture((l, h, h, 1), "elu", "none"), rng, GENERATOR)
    out = init_params(Architecture((d + 2, h, h, 1), "elu", "none"), rng, OUTCOME)
    mc = init_params(Architecture((1, h, h, 1), "relu", "logistic"), rng, MARGINAL_CRITIC)
    pc = init_params(Architecture((d, h, h, 1), "relu", "tanh"), rng, PROJECTION_CRITIC)
    return d, l, gen, out, mc, pc


def combined_loss(x, t, y, eta, rct, gen, out, mc, pc, alpha, pairing):
    """Build L_f + alpha (L_m + L_p) on a fresh tape; return (value, tape)."""
    tape = Tape()
    u = generator_forward(tape, gen, tape.const(eta))
    yhat1 = outcome_forward(tape, out, tape.const(x), u, 1)
    yhat0 = outcome_forward(tape, out, tape.const(x), u, 0)
    t_col = t.reshape(-1, 1)
    yhat_f = tape.add(
        tape.mul(tape.const(t_col), yhat1), tape.mul(tape.const(1.0 - t_col), yhat0)
    )
    lf = factual_loss(tape, y, yhat_f)
    lm = marginal_loss(tape, yhat1, yhat0, rct, mc)
    lp = projection_loss(tape, x, yhat1, yhat0, rct, pc, pairing=pairing)
    total = tape.add(lf, tape.scale(tape.add(lm, lp), alpha))
    return float(total.data), total, tape


def gradient_check_suite(n_configs: int = 100, seed: int = 2026, h: float = 1e-5):
    """Compare analytic gradients with central differences.

    Returns (worst_relative_error, n_parameters_checked); the relative error
    uses an absolute floor so near-zero gradients are compared absolutely.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    for _ in range(n_configs):
        d, l, gen, out, mc, pc = _random_networks(rng)
        n = 5
        x = rng.normal(size=(n, d))
        t = (rng.uniform(size=n) < 0.5).astype(np.float64)
        if t.sum() == 0:
            t[0] = 1.0
        elif t.sum() == n:
            t[0] = 0.0
        y = rng.normal(size=n)
        eta = rng.normal(size=(n, l))
        rct = RctOutcomes(rng.normal(size=4), rng.normal(size=4), 0.5)
        alpha = float(rng.uniform(0.01, 10.0))
        pairing = (rng.integers(0, n, size=4), rng.integers(0, n, size=4))

        params: list[NetworkParams] = [gen, out, mc, pc]
        arrays = [a for p in params for a in p.flat_arrays()]

        _, total, tape = combined_loss(x, t, y, eta, rct, gen, out, mc, pc, alpha, pairing)
        tape.backward(total)
        analytic = [
            np.zeros_like(a) if tape.grad_for(a) is None else tape.grad_for(a).copy()
            for a in arrays
        ]

        def value():
            v, _, _ = combined_loss(x, t, y, eta, rct, gen, out, mc, pc, alpha, pairing)
            return v

        for a, g in zip(arrays, analytic):
            flat = a.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = value()
                flat[i] = orig - h
                down = value()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                err = abs(gflat[i] - fd) / max(abs(fd), abs(gflat[i]), ABS_FLOOR / REL_TOL)
                worst = max(worst, err)
                checked += 1
    return worst, checked


# ----------------------------------------------------------------- suites


def check_gradients(n_configs: int = 100, seed: int = 2026) -> CheckResult:
    def run():
        worst, checked = gradient_check_suite(n_configs, seed)
        return worst <= REL_TOL, f"worst rel err {worst:.3g} over {checked} coords"

    return _timed("gradient-suite", run)


def check_mb_counterexample() -> CheckResult:
    def run():
        v = mb_counterexample_check()
        ok = (
            v.constraint_satisfied
            and v.objective_at_construction == 0
            and v.per_arm_term_at_means == 1 / 8
            and v.non_unique
        )
        return ok, (
            f"constructed objective {v.objective_at_construction}, "
            f"conditional-means objective {v.objective_at_conditional_means}"
        )

    return _timed("mb-counterexample", run)


def check_ideal_pb(n_instances: int = 50, seed: int = 7) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_instances):
            inst = random_discrete_instance(rng)
            sol = ideal_pb_oracle(inst)
            if not sol.unique:
                return False, "degenerate constraint system"
            worst = max(worst, sol.max_deviation)
        return True, f"max deviation {worst:.2e} over {n_instances} instances"

    return _timed("ideal-pb-oracle", run)


def check_pb_bound(n_cases: int = 1000, seed: int = 11) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        min_slack = np.inf
        for _ in range(n_cases):
            inst = random_discrete_instance(rng)
            k = inst.support.size
            z0 = rng.normal(scale=5.0, size=k)
            z1 = rng.normal(scale=5.0, size=k)
            res = exact_pb_bound_check(inst, z0, z1)
            min_slack = min(min_slack, *res.slack)
            if not res.holds:
                return False, f"violation, slack {min(res.slack):.3g}"
        return True, f"min slack {min_slack:.3g} over {n_cases} cases"

    return _timed("pb-bound-property", run)


def run_all_checks(gradient_configs: int = 100) -> list[CheckResult]:
    return [
        check_gradients(gradient_configs),
        check_mb_counterexample(),
        check_ideal_pb(),
        check_pb_bound(),
    ]


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"[{status}] {r.name} ({r.runtime_s:.2f}s): {r.detail}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)
