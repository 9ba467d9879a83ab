"""Pre-run of the 10-study spatial-model comparison used in acceptance.

Mirrors the acceptance test exactly: seeds default..default+9, S=100,
all models at default chain lengths, hyak-design MSE ranking per study.
"""

import json
import time

from hyaksim.config import default_config, with_overrides
from hyaksim.experiment import run_study

out = []
cfg0 = default_config()
for k in range(10):
    cfg = with_overrides(cfg0, seed=cfg0.seed + k)
    t0 = time.time()
    report = run_study(cfg)
    mses = {m: report.metrics[("hyak", m)].mse for m in cfg.models}
    best = min(mses, key=mses.get)
    row = {"seed": cfg.seed, "best": best, "wall": round(time.time() - t0, 1),
           "mse": {m: round(v, 1) for m, v in mses.items()},
           "unconverged": report.runtime["failed_fits"]}
    out.append(row)
    print(json.dumps(row), flush=True)

wins = sum(1 for r in out if r["best"] == "covariates_space")
print(f"WINS {wins}/10", flush=True)
