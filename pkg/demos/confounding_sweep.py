"""Confounding-strength sweep on the sensitivity-model benchmark.

The MSM data-generating process bounds the odds ratio between the nominal
propensity e(x) and the complete propensity e(x, u) by Gamma. At Gamma = 1
the data are unconfounded and the factual learner is fine; as Gamma grows
its error climbs, while the balanced model stays anchored to the RCT arms.

Two Gamma values and a reduced budget keep this under ~10 minutes; the full
sweep (log Gamma 0..5, 5 seeds) is criterion 6 of the acceptance suite.

Run:  python3 demos/confounding_sweep.py
"""
import numpy as np

from catebal import MsmDgp, TrainConfig, gen_rct_outcomes, sqrt_pehe, train

EPOCHS = 1200
SEED = 0

for log_gamma in (0.0, 3.0):
    dgp = MsmDgp(gamma=float(np.exp(log_gamma)))
    obs = dgp.sample(1000, SEED)
    rct = gen_rct_outcomes(dgp, 100, 0.5, SEED + 1)
    x_eval = dgp.sample_covariates(2000, np.random.default_rng(SEED + 2))
    tau_true = dgp.true_cate(x_eval[:, 0])

    print(f"log Gamma = {log_gamma:.0f}")
    for method in ("baseline", "mb+pb"):
        config = TrainConfig(method=method, epochs=EPOCHS, batch_size=obs.n,
                             seed=SEED)
        model = train(obs, rct if method != "baseline" else None, config)
        pehe = sqrt_pehe(model, x_eval, tau_true, seed=SEED)
        print(f"  {method:8s}  sqrt_pehe={pehe:6.3f}")
