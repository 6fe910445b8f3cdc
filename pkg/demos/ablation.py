"""
Does pretraining help downstream?
=================================

Pretrains the tiny encoder on a synthetic daily + weekly corpus, then
fine-tunes the WF+Transformer yield model and the WF flu forecaster from
the pretrained weights and from scratch over three seeds. Takes about ten
minutes on one core.
"""
import time

from threadpoolctl import threadpool_limits

from weatherformer.benchmark import BenchmarkSpec, pretrained_encoder, run_ablation

spec = BenchmarkSpec()
with threadpool_limits(limits=1):
    start = time.perf_counter()
    state, stats, result = pretrained_encoder(spec, seed=0)
    print(f"pretrained {spec.pretrain_epochs} epochs, best val {result.best_val:.4f} "
          f"({time.perf_counter() - start:.0f} s)")
    print("scaler means: daily", round(float(state["scalers"][0].mean()), 4),
          "weekly", round(float(state["scalers"][6].mean()), 4))
    res = run_ablation(spec, seeds=(0, 1, 2), encoder=(state, stats))

for task, unit in (("yield", "RMSE Bu/Acre"), ("flu", "MAE")):
    print(f"{task:>5} ({unit}): pretrained {res[task]['pretrained']:.4f}  scratch {res[task]['scratch']:.4f}")
    for seed, row in enumerate(res["per_seed"][task]):
        print(f"        seed {seed}: {row['pretrained']:.4f} vs {row['scratch']:.4f}")
