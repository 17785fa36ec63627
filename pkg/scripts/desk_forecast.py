"""Train on the seeded seasonal+trend+noise series and compare with repeat-last.

    python scripts/desk_forecast.py --epochs 15
    python scripts/desk_forecast.py --epochs 3 --length 4000 --horizon 48
"""

import argparse
import dataclasses

from film.experiment import desk_series, run_experiment
from film.model import FiLMConfig
from film.training import TrainConfig, format_history


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=10_000)
    ap.add_argument("--horizon", type=int, default=FiLMConfig.horizon)
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = FiLMConfig(horizon=args.horizon)
    train_cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    print("model", dataclasses.asdict(cfg))
    print("train", dataclasses.asdict(train_cfg))
    result, data = run_experiment(
        desk_series(args.length, args.seed),
        cfg,
        train_cfg,
        progress=lambda r: print(f"  epoch {r.epoch:2d}  train {r.train_mse:.5f}  val {r.val_mse:.5f}", flush=True),
    )
    print(format_history(result.training.history))
    print(f"windows      train {len(data.train)}  val {len(data.val)}  test {len(data.test)}")
    print(f"best epoch   {result.training.best_epoch}")
    print(f"test mse     {result.test.mse:.6f}  mae {result.test.mae:.6f}")
    print(f"naive mse    {result.naive.mse:.6f}  mae {result.naive.mae:.6f}")
    print(f"ratio        {result.ratio:.4f}")
    print(f"runtime      {result.runtime:.1f}s")


if __name__ == "__main__":
    main()
