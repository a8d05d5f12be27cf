"""
End-to-end experiment and the generalisation bound
==================================================

``run_experiment`` corrupts the labels, optionally estimates T, trains the
classifier through the transition layer and scores it on clean test labels.
"""
from noisypairs.pipeline import BoundInputs, ExperimentConfig, generalization_bound, run_experiment

base = ExperimentConfig(rho=0.4, n=1500, n_test=1500, epochs=15)
for method in ("mcl", "mns_true_T", "mns_estimated_T"):
    rep = run_experiment(base.replace(method=method))
    extra = f" eps={rep.epsilon:.3f}" if rep.epsilon is not None else ""
    print(f"{method:16s} clean test accuracy {rep.test_accuracy:.4f} "
          f"(epoch {rep.selected_epoch}){extra}")

# the bound uses the trained weights' Frobenius norms and the input radius
print("bound inputs:", {k: rep.bound[k] for k in ("B", "n", "depth")})
print("bound value:", rep.bound["value"])

# %%
# The bound shrinks as 1/sqrt(n)
for n in (10**3, 10**4, 10**5, 10**6):
    print(n, generalization_bound(BoundInputs(1.0, 3, 2, [2.0, 2.0], 16.1, 0.05, n)))
