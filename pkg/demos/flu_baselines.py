"""
Influenza forecasting on a synthetic city
=========================================

Rolling one-week-ahead origins over the 2016 season with a 10-week horizon.
Compares persistence, a lagged linear model, a low-order ARIMA and the
no-weather transformer, reporting MAE at +1, +5 and +10 weeks.
"""
import numpy as np

from weatherformer.downstream import arima, flu
from weatherformer.downstream.training import TrainConfig

series = flu.synthetic_ili(seed=0)
split = flu.sequential_splits(series)[0]
window = 105
train_tasks, val_tasks = flu.split_tasks(series, split, window)
print(f"validation year {split.validation_year}: {len(val_tasks)} tasks, {len(train_tasks)} training tasks")

truth = np.stack([series.ili[t.target_rows.start:t.target_rows.stop] for t in val_tasks])
persistence = np.stack([np.full(10, series.ili[t.origin]) for t in val_tasks])
rows = {"persistence": flu.mae_at_horizons(persistence, truth)}
rows["linreg"] = flu.run_baseline_split(series, split, "linreg", window).mae
rows["arima(2,1,1)"] = flu.run_baseline_split(series, split, "arima", window, arima.ArimaConfig(2, 1, 1)).mae
res = flu.run_transformer_split(series, split, "no-weather", window, seed=0,
                                config=TrainConfig(epochs=10, batch_size=64, base_lr=9e-4, warmup=3, decay=0.95),
                                d_model=32, n_layers=2)
rows["transformer"] = res.mae

print(f"{'model':>14}  {'+1':>7} {'+5':>7} {'+10':>7}")
for name, mae in rows.items():
    print(f"{name:>14}  {mae[1]:7.3f} {mae[5]:7.3f} {mae[10]:7.3f}")
