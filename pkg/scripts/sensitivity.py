"""Sweep the Legendre order N and the mode count M on the synthetic series.

Each cell is one short training run; the table reports test MSE relative to
the repeat-last baseline.  Defaults are sized for a few minutes on one core.

    python scripts/sensitivity.py
    python scripts/sensitivity.py --orders 16,64,256 --modes 8,32 --epochs 3
"""

import argparse
import itertools

from film.experiment import desk_series, run_experiment
from film.model import FiLMConfig
from film.training import TrainConfig


def ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--orders", type=ints, default=[16, 32, 64])
    ap.add_argument("--modes", type=ints, default=[4, 16])
    ap.add_argument("--horizon", type=int, default=48)
    ap.add_argument("--length", type=int, default=4000)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    table = desk_series(args.length, args.seed)
    train_cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    print(f"{'N':>5} {'M':>4} {'test_mse':>10} {'ratio':>8} {'seconds':>8}")
    for order, modes in itertools.product(args.orders, args.modes):
        cfg = FiLMConfig(horizon=args.horizon, legendre_order=order, mode_count=modes)
        result, _ = run_experiment(table, cfg, train_cfg)
        print(f"{order:>5} {modes:>4} {result.test.mse:>10.5f} {result.ratio:>8.4f} {result.runtime:>8.1f}", flush=True)


if __name__ == "__main__":
    main()
