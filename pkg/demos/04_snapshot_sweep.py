"""Estimation quality against the number of snapshots, at desk scale.

Equivalent CLI call: covsense sweep-t --trials 5
"""

from covsense.experiments import ExperimentConfig, run_experiment

cfg = ExperimentConfig(N_t=16, N_r=8, K_t=4, K_r=4, S=[16], T=[10, 20, 40, 80], trials=5, seed=0)
rows = [r for r in run_experiment(cfg) if r.kind == "mean"]
print(f"{'estimator':10s} {'T':>4s} {'eta':>7s} {'NMSE':>8s} {'rank':>6s}")
for r in sorted(rows, key=lambda r: (r.estimator, r.T)):
    print(f"{r.estimator:10s} {r.T:4d} {r.eta:7.3f} {r.nmse:8.3f} {r.r_est:6.1f}")

# the noise-floor ablation: remove sigma^2 I before fitting
cfg.subtract_noise = True
rows = [r for r in run_experiment(cfg) if r.kind == "mean"]
print("\nwith the known noise floor removed:")
for r in sorted(rows, key=lambda r: (r.estimator, r.T)):
    print(f"{r.estimator:10s} {r.T:4d} {r.eta:7.3f} {r.nmse:8.3f}")
