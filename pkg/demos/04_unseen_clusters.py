"""Scoring data from clusters the model never saw."""

# %%
from armed.simgen import SpiralConfig, gen_spiral
from armed.trainer import TrainConfig, unseen_cluster_eval

ds = gen_spiral(SpiralConfig.for_simulation("sim1", n=5000, seed=0))
config = TrainConfig(epochs=30, lambda_g=0.1, lambda_F=0.1, sigma_p=1.0)
report = unseen_cluster_eval(ds, [8, 9], config)

# %%
# inferred_Z: soft cluster weights from a classifier trained on the seen clusters.
# random_Z: a random seen cluster per sample.  fixed_only: no random effects.
for source, m in report["metrics"].items():
    print(f"{source:<11} accuracy {m['accuracy']:.3f}  auroc {m['auroc']:.3f}")

# %%
zp = report["model"].zpredictor
unseen = ds.subset(ds.cluster_id >= 8)
weights = zp.infer_z(unseen.X[:5])
print("inferred weights for five unseen samples:")
print(weights.round(2))
