"""
Estimating the transition matrix from anchor points
===================================================

Stage one fits the *noisy* class posterior from noisy similarity pairs. At an
anchor point of class i the clean posterior is one-hot, so the noisy
posterior there is row i of T. The highest-scoring examples stand in for
anchors.
"""
import numpy as np

from noisypairs.estimation import (estimate_from_model, estimate_transition,
                                   estimation_error, select_anchors, train_noisy_posterior)
from noisypairs.noise import (corrupt_labels, gaussian_blobs, make_similarity_pairs,
                              symmetric_transition)
from noisypairs.training import TrainConfig

np.set_printoptions(precision=3, suppress=True)
T = symmetric_transition(3, 0.3)

# with exact posteriors and true anchors the estimate is exact
rng = np.random.default_rng(0)
G = rng.dirichlet(np.ones(3), size=200)
G[:3] = np.eye(3)
exact = estimate_transition(G @ T, select_anchors(G @ T, k=1))
print("exact-posterior estimate, error", estimation_error(T, exact))

# %%
# With a learned posterior
data = gaussian_blobs(3, 1000, 8, 4.0, 1.0, seed=1)
noisy = corrupt_labels(data.y, T, seed=2)
val, tr = np.arange(300), np.arange(300, 3000)
stage1 = train_noisy_posterior(data.X[tr], noisy[tr], data.X[val],
                               make_similarity_pairs(noisy[val]), 3, TrainConfig(), seed=3)
est = estimate_from_model(stage1.model, data.X[tr], k=5)
print("estimated T\n", est.T_hat)
print("relative L1 error", estimation_error(T, est.T_hat))

# the top-scoring examples sit in the outer tails of each cluster, where the
# learned posterior is more confident than the true noisy posterior; skipping
# the extreme tail trades some of that bias for variance
trimmed = estimate_from_model(stage1.model, data.X[tr], k=5, percentile=97)
print("97th-percentile anchors, error", estimation_error(T, trimmed.T_hat))
