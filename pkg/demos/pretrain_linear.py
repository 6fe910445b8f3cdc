"""
Masked-feature pretraining on data with a known answer
======================================================

Every measurement is a signed copy of one latent series plus noise, so the
10 held-out measurements are a linear function of the other 21 and the best
achievable masked-feature MSE is about sigma**2. A short run shows the
validation loss falling toward that floor and the daily and weekly
granularity scalers moving apart.
"""
from pathlib import Path

from weatherformer.model import WeatherFormer, preset
from weatherformer.pretrain import PretrainConfig, linear_relation_dataset, pretrain
from weatherformer.svg import write_chart

out = Path("demo_out")
out.mkdir(exist_ok=True)
sigma = 0.1

train, signs = linear_relation_dataset(4096, 4, sigma, seed=0)
val, _ = linear_relation_dataset(256, 4, sigma, seed=1, signs=signs)

model = WeatherFormer(preset("desk"), seed=0)
config = PretrainConfig(epochs=15, batch_size=64)


def show(row):
    print(f"epoch {row['epoch']:2d}  lr {row['lr']:.2e}  batch {row['batch_loss']:.4f}  "
          f"val {row['val_loss']:.4f}  targets seen {row['targets_seen']}")


result = pretrain(model, train, val, config, run_dir=out / "linear_run", log=show)
print(f"best val {result.best_val:.4f} at epoch {result.best_epoch}; floor about {sigma ** 2 * (1 + 1 / 21):.4f}")

scalers = result.best_state["scalers"]
print("daily scaler mean:", round(float(scalers[0].mean()), 4), "weekly:", round(float(scalers[6].mean()), 4))

epochs = result.column("epoch")
write_chart(out / "linear_loss.svg", {"batch": (epochs, result.column("batch_loss")),
                                      "val": (epochs, result.column("val_loss"))},
            title="masked-feature loss", log_y=True)
