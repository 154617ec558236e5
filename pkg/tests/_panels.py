"""Synthetic panels shared by the evaluation and acceptance tests."""

import numpy as np

from mtload.oracle import generate, make_ar_spec


def noiseless_panel(days=90, seed=0, K=2):
    # Daily-periodic AR dynamics started off their orbit. Every calendar type
    # revisits one point, which the estimator pins down within the warm-up.
    spec = make_ar_spec(K, T=24 * days, seed=seed, weekend_factor=1.0, noise=0.0)
    spec.s0 = 0.5 * np.linalg.solve(np.eye(K) - spec.M_s[0, :, 1:], spec.M_s[0, :, 0])
    return generate(spec)


def noisy_panel(days=120, seed=0, K=4):
    spec = make_ar_spec(K, T=24 * days, seed=seed, noise=0.5, noise_corr=0.6)
    return generate(spec)
