"""
Sweeps, reports and on-disk formats
===================================

A sweep runs every (noise rate, method, seed) cell and aggregates the clean
test accuracy per cell. Everything written to disk reads back exactly.
"""
import tempfile
from pathlib import Path

from noisypairs import io as nio
from noisypairs.cli import run_sweep, write_report, write_sweep_csv
from noisypairs.pipeline import ExperimentConfig, ExperimentReport, run_experiment

out = Path(tempfile.mkdtemp(prefix="noisypairs-demo-"))
base = ExperimentConfig(n=900, n_test=900, epochs=8)

rows = run_sweep(base, rhos=[0.0, 0.4], methods=["mcl", "mns_true_T"], seeds=[0, 1])
write_sweep_csv(rows, out / "results.csv")
print((out / "table.csv").read_text())

# %%
# A single run's artefacts
report, model = run_experiment(base.replace(rho=0.3), return_model=True)
write_report(report, out, model)
print(sorted(p.name for p in out.iterdir()))
again = ExperimentReport.from_json((out / "report.json").read_text())
print("report round trip exact:", again.to_json() == report.to_json())
print("estimated T read back:\n", nio.read_matrix(out / "T_hat.txt"))
print("first curve rows:", nio.read_curves_csv(out / "curves.csv")[:2])
