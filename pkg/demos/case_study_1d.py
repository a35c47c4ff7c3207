"""1-D case study: why the factual learner is biased, and what balancing buys.

The data-generating process has X ~ N(1, 0.2^2), a hidden confounder
U ~ Ber(0.5), treatment odds driven by U, and outcomes

    Y_t = (-4t + (1 - t)) * X + 3.5 * (2U - 1)        so  tau(x) = -8x.

A regression on the factual data absorbs E[U | X, T] into its prediction and
ends up biased; the marginal- and projection-balancing regularizers use 100
outcome-only RCT observations to pull the potential-outcome estimates back.

Reduced budget (1200 epochs, the alpha ramp rescales automatically) so the
script finishes in about two minutes on one core; the full-budget numbers
live in the acceptance suite.

Run:  python3 demos/case_study_1d.py
"""
import numpy as np

from catebal import (
    CaseStudyDgp,
    TrainConfig,
    gen_rct_outcomes,
    predict_cate,
    sqrt_pehe,
    train,
)

EPOCHS = 1200
SEED = 0

dgp = CaseStudyDgp()
obs = dgp.sample(1000, SEED)
rct = gen_rct_outcomes(dgp, 100, 0.5, SEED + 1)

print(f"observational draw: n={obs.n}, treated fraction={obs.t.mean():.3f}")
print(f"RCT arms: n1={rct.y1.size}, n0={rct.y0.size}, "
      f"mean(Y1)={rct.y1.mean():+.2f} (truth -3.5), "
      f"mean(Y0)={rct.y0.mean():+.2f} (truth +4.5)")
print()

x_eval = dgp.sample_covariates(2000, np.random.default_rng(SEED + 2))
tau_true = dgp.true_cate(x_eval[:, 0])

for method in ("baseline", "mb", "pb", "mb+pb"):
    config = TrainConfig(method=method, epochs=EPOCHS, batch_size=obs.n,
                         seed=SEED)
    model = train(obs, rct, config)
    tau_hat = predict_cate(model, x_eval, seed=SEED)
    # fitted affine summary of tau_hat(x): truth is slope -8, intercept 0
    slope, icept = np.polyfit(x_eval[:, 0], tau_hat, 1)
    pehe = sqrt_pehe(model, x_eval, tau_true, seed=SEED)
    print(f"{method:8s}  sqrt_pehe={pehe:6.3f}   "
          f"tau_hat(x) ~ {slope:+.2f} x {icept:+.2f}   (truth -8.00 x +0.00)")
