"""Do the models lean on probes that only track cluster class balance?"""

# %%
import numpy as np

from armed.metrics import aggregate_importance, paired_t_test
from armed.simgen import SpiralConfig, gen_spiral
from armed.trainer import TrainConfig, crossvalidate

ds = gen_spiral(SpiralConfig.for_simulation("sim3", n=4000, seed=0))
config = TrainConfig(epochs=25, lambda_g=0.1, lambda_F=0.1, sigma_p=1.0)
reports = crossvalidate(ds, 5, config, ["conventional", "armed"])

# %%
# Importance is the mean absolute gradient of the fixed-effects output per feature.
names = ["x1", "x2", "probe x3", "probe x4"]
for variant, reps in reports.items():
    imp = np.array([r.feature_importance for r in reps])
    med = aggregate_importance(imp)
    print(variant, dict(zip(names, np.round(med, 4))))
    ref = int(np.argmin(med[:2]))
    for probe in (2, 3):
        res = paired_t_test(imp[:, ref], imp[:, probe])
        print(f"   {names[ref]} - {names[probe]}: t = {res.t_statistic:.2f}, p = {res.p_value:.3g}")
