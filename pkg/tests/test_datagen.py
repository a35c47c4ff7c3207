"""Unit tests for data generation, propensities, CSV schemas, preprocessing."""

import numpy as np
import pytest

from catebal.datagen import (
    CaseStudyDgp,
    DataError,
    MsmDgp,
    RctOutcomes,
    TabularDataset,
    complete_propensity,
    gen_case_study,
    gen_msm,
    gen_rct_outcomes,
    inject_confounding,
    load_csv,
    load_rct_csv,
    logistic,
    nominal_propensity,
    save_csv,
    save_rct_csv,
    split_rct_by_covariate,
    standardize,
)


def test_logistic_matches_naive_and_is_stable():
    z = np.linspace(-30, 30, 101)
    np.testing.assert_allclose(logistic(z), 1.0 / (1.0 + np.exp(-z)), rtol=1e-14)
    assert logistic(1e6) == 1.0 and logistic(-1e6) == 0.0


# ------------------------------------------------------------- containers


def test_tabular_dataset_validation():
    with pytest.raises(DataError):
        TabularDataset(np.zeros((3, 1)), [0, 1], [0.0, 1.0, 2.0])
    with pytest.raises(DataError):
        TabularDataset(np.zeros((2, 1)), [0, 2], [0.0, 1.0])
    ds = TabularDataset(np.arange(3.0), [0, 1, 0], [1.0, 2.0, 3.0])
    assert ds.x.shape == (3, 1) and ds.n == 3 and ds.d == 1
    sub = ds.subset([0, 2])
    np.testing.assert_array_equal(sub.y, [1.0, 3.0])


def test_rct_outcomes_validation():
    with pytest.raises(DataError):
        RctOutcomes([1.0], [2.0], 1.0)
    with pytest.raises(DataError):
        RctOutcomes([np.inf], [2.0], 0.5)
    rct = RctOutcomes([1.0, 2.0], [3.0], 0.5)
    assert rct.n == 3


# ------------------------------------------------------- case-study model


def test_case_study_oracle_identities():
    dgp = CaseStudyDgp()
    x = np.array([0.0, 0.5, 1.0, 1.5])
    np.testing.assert_allclose(dgp.true_cate(x), -8.0 * x)
    np.testing.assert_allclose(dgp.conditional_mean(1, x), -3.5 * x)
    np.testing.assert_allclose(dgp.conditional_mean(0, x), 4.5 * x)
    ds = gen_case_study(5000, 0)
    np.testing.assert_allclose(ds.oracle.cate, ds.oracle.mu1 - ds.oracle.mu0)
    np.testing.assert_allclose(ds.oracle.cate, -8.0 * ds.x[:, 0])
    # observed outcome is the factual potential outcome
    np.testing.assert_array_equal(
        ds.y, ds.t * ds.oracle.y1 + (1 - ds.t) * ds.oracle.y0
    )
    # X ~ N(1, 0.2^2), confounded assignment favors treatment when U > 0
    assert abs(ds.x.mean() - 1.0) < 0.02 and abs(ds.x.std() - 0.2) < 0.02
    assert ds.oracle.u[ds.t == 1].mean() > 0.3
    assert ds.oracle.u[ds.t == 0].mean() < -0.3


def test_case_study_rct_arm_means():
    dgp = CaseStudyDgp()
    rng = np.random.default_rng(1)
    y1 = dgp.sample_outcomes(1, 20000, rng)
    y0 = dgp.sample_outcomes(0, 20000, rng)
    assert y1.mean() == pytest.approx(-3.5, abs=0.1)
    assert y0.mean() == pytest.approx(4.5, abs=0.05)


def test_case_study_requires_two_samples():
    with pytest.raises(DataError):
        gen_case_study(1, 0)


# ------------------------------------------------------------- MSM model


def test_nominal_propensity_form():
    np.testing.assert_allclose(nominal_propensity(0.0), logistic(0.5))
    np.testing.assert_allclose(nominal_propensity(-2.0), logistic(-1.0))


def test_complete_propensity_frozen_value():
    # independently derived: at gamma = e^2, x = 0, u = 1 the complete
    # propensity equals 1 / (1/(gamma e) + 1 - 1/gamma) with e = logistic(0.5)
    assert complete_propensity(0.0, 1.0, float(np.e**2)) == pytest.approx(
        0.9241418199787566, abs=1e-12
    )


def test_complete_propensity_attains_msm_bounds():
    gamma = 3.0
    x = np.linspace(-2, 2, 9)
    e = nominal_propensity(x)
    nominal_odds = e / (1 - e)
    for u, target in ((1.0, gamma), (0.0, 1.0 / gamma)):
        p = complete_propensity(x, u, gamma)
        ratio = (p / (1 - p)) / nominal_odds
        np.testing.assert_allclose(ratio, target, rtol=1e-12)


def test_complete_propensity_gamma_one_is_nominal():
    x = np.linspace(-2, 2, 5)
    for u in (0.0, 0.5, 1.0):
        np.testing.assert_allclose(
            complete_propensity(x, u, 1.0), nominal_propensity(x), rtol=1e-12
        )


def test_msm_validation_and_cate_at_zero():
    with pytest.raises(DataError):
        MsmDgp(0.5)
    dgp = MsmDgp(2.0)
    assert dgp.true_cate(np.array([0.0]))[0] == pytest.approx(4.0)
    np.testing.assert_allclose(
        dgp.true_cate(np.array([1.0])),
        dgp.conditional_mean(1, np.array([1.0])) - dgp.conditional_mean(0, np.array([1.0])),
    )


def test_msm_oracle_consistency_and_unconfounded_variant():
    ds = gen_msm(4000, 5.0, 3)
    np.testing.assert_array_equal(
        ds.y, ds.t * ds.oracle.y1 + (1 - ds.t) * ds.oracle.y0
    )
    # mu_t is the conditional mean given X: averaging residuals over U and
    # noise should vanish
    assert abs((ds.oracle.y1 - ds.oracle.mu1).mean()) < 0.1
    # confounded: U shifts treatment; unconfounded variant: it does not
    conf_gap = ds.oracle.u[ds.t == 1].mean() - ds.oracle.u[ds.t == 0].mean()
    free = MsmDgp(5.0, confounded=False).sample(4000, 3)
    free_gap = free.oracle.u[free.t == 1].mean() - free.oracle.u[free.t == 0].mean()
    assert conf_gap > 0.2 and abs(free_gap) < 0.1


# ------------------------------------------------------------ RCT samples


def test_gen_rct_outcomes_basic():
    rct = gen_rct_outcomes(CaseStudyDgp(), 100, 0.5, 0)
    assert rct.n == 100 and rct.y1.size > 0 and rct.y0.size > 0
    assert rct.treated_prob == 0.5
    again = gen_rct_outcomes(CaseStudyDgp(), 100, 0.5, 0)
    np.testing.assert_array_equal(rct.y1, again.y1)
    np.testing.assert_array_equal(rct.y0, again.y0)


def test_gen_rct_outcomes_validation():
    with pytest.raises(DataError):
        gen_rct_outcomes(CaseStudyDgp(), 1, 0.5, 0)
    with pytest.raises(DataError):
        gen_rct_outcomes(CaseStudyDgp(), 10, 1.5, 0)


# -------------------------------------------------- confounding injection


def test_inject_confounding_keeps_extreme_tails():
    # controls with y in {-2,-1,0,1,2}: mean 0, keep y < 0 -> {-2,-1};
    # treated with the same values: keep y > 0 -> {1, 2}
    y = np.array([-2.0, -1.0, 0.0, 1.0, 2.0] * 2)
    t = np.array([0.0] * 5 + [1.0] * 5)
    ds = TabularDataset(np.arange(10.0), t, y)
    out = inject_confounding(ds, 0.0)
    np.testing.assert_array_equal(np.sort(out.y[out.t == 0]), [-2.0, -1.0])
    np.testing.assert_array_equal(np.sort(out.y[out.t == 1]), [1.0, 2.0])


def test_inject_confounding_errors():
    ds = TabularDataset(np.arange(4.0), [0, 0, 1, 1], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(DataError):
        inject_confounding(ds, -1.0)
    with pytest.raises(DataError):  # large c empties both arms
        inject_confounding(ds, 10.0)
    only_treated = TabularDataset(np.arange(2.0), [1, 1], [0.0, 1.0])
    with pytest.raises(DataError):
        inject_confounding(only_treated, 0.0)


def test_inject_confounding_shifts_arm_means():
    ds = gen_case_study(2000, 7)
    out = inject_confounding(ds, 0.5)
    assert out.n < ds.n
    assert out.y[out.t == 1].mean() > ds.y[ds.t == 1].mean()
    assert out.y[out.t == 0].mean() < ds.y[ds.t == 0].mean()


# ------------------------------------------------------------ RCT split


def test_split_rct_by_covariate():
    ds = gen_case_study(500, 5)
    rule = lambda col: col >= 1.0
    rct, pool = split_rct_by_covariate(ds, 0, rule, 40, seed=1)
    assert rct.n == 40 and pool.n == 460
    rct2, _ = split_rct_by_covariate(ds, 0, rule, 40, seed=1)
    np.testing.assert_array_equal(rct.y1, rct2.y1)
    assert rct.treated_prob == rct.y1.size / 40
    with pytest.raises(DataError):
        split_rct_by_covariate(ds, 0, lambda col: col > 100.0, 40)
    with pytest.raises(DataError):
        split_rct_by_covariate(ds, 2, rule, 40)


# ------------------------------------------------------------------- CSV


def test_csv_round_trip_exact(tmp_path):
    ds = gen_case_study(50, 9)
    path = tmp_path / "obs.csv"
    save_csv(path, ds)
    back = load_csv(path)
    np.testing.assert_array_equal(back.x, ds.x)
    np.testing.assert_array_equal(back.t, ds.t)
    np.testing.assert_array_equal(back.y, ds.y)


def test_csv_error_reporting(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,t,y\n1.0,0,2.0\n1.0,7,3.0\n")
    with pytest.raises(DataError, match=":3"):
        load_csv(str(path))
    path.write_text("a,b,c\n")
    with pytest.raises(DataError, match="header"):
        load_csv(str(path))
    path.write_text("x1,t,y\n1.0,0\n")
    with pytest.raises(DataError, match=":2"):
        load_csv(str(path))
    path.write_text("x1,t,y\n")
    with pytest.raises(DataError, match="no data rows"):
        load_csv(str(path))


def test_rct_csv_round_trip(tmp_path):
    rct = RctOutcomes([1.5, 2.5], [0.25], 2.0 / 3.0)
    path = tmp_path / "rct.csv"
    save_rct_csv(path, rct)
    back = load_rct_csv(str(path))
    np.testing.assert_array_equal(back.y1, rct.y1)
    np.testing.assert_array_equal(back.y0, rct.y0)
    assert back.treated_prob == pytest.approx(2.0 / 3.0)
    path.write_text("t,y\n1,1.0\n1,2.0\n")
    with pytest.raises(DataError, match="arm is empty"):
        load_rct_csv(str(path))


# ------------------------------------------------------------ standardize


def test_standardize_and_reuse_on_split():
    ds = gen_case_study(200, 11)
    out, std = standardize(ds)
    assert abs(out.x[:, 0].mean()) < 1e-12
    assert out.x[:, 0].std() == pytest.approx(1.0)
    # applying the fitted transform to new data reuses the training stats
    fresh = gen_case_study(50, 12)
    mapped = std.apply(fresh)
    np.testing.assert_allclose(
        mapped.x[:, 0], (fresh.x[:, 0] - std.means[0]) / std.sds[0]
    )


def test_standardize_constant_column_error():
    ds = TabularDataset(np.ones((4, 1)), [0, 1, 0, 1], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(DataError):
        standardize(ds)
