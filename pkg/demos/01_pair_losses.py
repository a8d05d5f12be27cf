"""
Pairwise losses on predicted similarity
=======================================

A classifier g outputs a class posterior. Two examples are predicted to be
similar with probability g_a . g_b. Passing each posterior through a
transition matrix first (f = T^T g) predicts the *noisy* similarity instead.
"""
import numpy as np

from noisypairs.nn import finite_diff_gradient, init_mlp, relative_error, softmax
from noisypairs.noise import make_similarity_pairs, symmetric_transition
from noisypairs.objective import batch_pair_loss, corrected_posterior, mcl_loss, mns_loss

np.set_printoptions(precision=4, suppress=True)

# two posteriors over three classes
g_a = softmax([2.0, 0.1, -1.0])
g_b = softmax([1.5, 0.3, -0.5])
print("g_a", g_a, " g_b", g_b)

# symmetric noise moves 30% of the mass off the diagonal
T = symmetric_transition(3, 0.3)
f_a, f_b = corrected_posterior(g_a, T), corrected_posterior(g_b, T)
print("f_a", f_a, " f_b", f_b)

# without the transition layer the pair looks more similar than the noisy
# labels can ever make it
for s in (1, 0):
    plain = mcl_loss(g_a, g_b, s)
    noisy = mns_loss(g_a, g_b, T, s)
    print(f"s={s}: plain s_hat={plain.s_hat:.4f} loss={plain.loss:.4f} | "
          f"corrected s_hat={noisy.s_hat:.4f} loss={noisy.loss:.4f}")

# with T = I the two losses coincide bit for bit
same = mns_loss(g_a, g_b, np.eye(3), 1).loss == mcl_loss(g_a, g_b, 1).loss
print("identity transition reproduces the plain loss exactly:", same)

# the logit gradient is bounded by one in magnitude
print("largest |dl/dh|:", np.abs(mns_loss(g_a, g_b, T, 0).grad_first).max())

# %%
# Whole minibatch: every within-batch pair contributes to the mean loss
rng = np.random.default_rng(0)
model = init_mlp(4, [8], 3, rng)
X = rng.normal(size=(6, 4))
pairs = make_similarity_pairs(rng.integers(1, 4, size=6))
loss, grads = batch_pair_loss(model, X, pairs, T)
numeric = finite_diff_gradient(lambda m: batch_pair_loss(m, X, pairs, T)[0], model)
print(f"{len(pairs)} pairs, mean loss {loss:.4f}, "
      f"gradient check rel. error {relative_error(grads.flat(), numeric.flat()):.1e}")
