"""
From clean classes to noisy similarity labels
=============================================

Class labels are corrupted through a transition matrix. Only the similarity
bit of each pair of corrupted labels is used for learning.
"""
import numpy as np

from noisypairs.noise import (corrupt_labels, gaussian_blobs, make_similarity_pairs,
                              nearest_mean_predict, simplex_means, symmetric_transition)

np.set_printoptions(precision=3, suppress=True)

T = symmetric_transition(4, 0.4)
print("transition matrix\n", T)

# empirical flip frequencies approach the rows of T
y = np.repeat(np.arange(1, 5), 20_000)
noisy = corrupt_labels(y, T, seed=1)
freq = np.zeros((4, 4))
np.add.at(freq, (y - 1, noisy - 1), 1)
print("empirical rows\n", freq / 20_000)

# %%
# Pairs: with C balanced classes only about 1/C of the pairs are positive
lab = np.random.default_rng(0).integers(1, 11, size=1000)
pairs = make_similarity_pairs(lab)
print(f"{len(pairs)} pairs, positive fraction {pairs.positive_fraction():.4f}")

sampled = make_similarity_pairs(lab, "sampled", k=5, seed=2)
print("five sampled pairs (first, second, sim):\n", np.column_stack([sampled.first, sampled.second, sampled.sim]))

# %%
# Synthetic data: Gaussian blobs on a regular simplex. A nearest-mean rule
# gives the accuracy ceiling for the chosen separation/spread ratio.
means = simplex_means(3, 8, 4.0)
fresh = gaussian_blobs(3, 30_000, 8, 4.0, 1.0, seed=3)
ceiling = np.mean(nearest_mean_predict(fresh.X, means) == fresh.y)
print(f"nearest-mean accuracy at separation/spread = 4: {ceiling:.4f}")
