"""Train LU-Nets of several depths on the 2-D Gaussian mixture and print test NLLs.

    python scripts/mixture_depths.py --seeds 0 1 2 --hidden 2 3 5 8 12
"""
import argparse
import time

import numpy as np

from lunet.data import MixtureSpec, gaussian_mixture
from lunet.model import init_net
from lunet.train import ClipKind, TrainConfig, evaluate_nll, fit

EPOCHS = {2: 10, 3: 20, 5: 30, 8: 35, 12: 40}


def mixture_config(hidden: int, seed: int = 0, clip: str = "euclidean") -> TrainConfig:
    return TrainConfig(epochs=EPOCHS.get(hidden, 40), batch_size=128, lr0=1.0, lr_decay=0.9,
                       decay_every=1, momentum=0.9, clip_kind=ClipKind(clip),
                       clip_threshold=1.0, gamma=1.0, seed=seed)


def run(hidden: int, seed: int = 0, data_seed: int = 0, clip: str = "euclidean"):
    train, test = gaussian_mixture(MixtureSpec(seed=data_seed))
    net = init_net(hidden + 1, 2, seed=seed)
    fit(net, train, mixture_config(hidden, seed, clip))
    return net, evaluate_nll(net, test)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, nargs="+", default=[2, 3, 5, 8, 12])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--clip", default="euclidean", choices=[c.value for c in ClipKind])
    args = ap.parse_args()
    print(f"{'hidden':>6} {'M':>3} {'seed':>4} {'test NLL':>9} {'std':>7} {'time':>6}")
    for h in args.hidden:
        means = []
        for s in args.seeds:
            t0 = time.perf_counter()
            try:
                _, (mean, std) = run(h, s, clip=args.clip)
            except ArithmeticError as exc:
                print(f"{h:>6} {h + 1:>3} {s:>4} failed: {exc}")
                continue
            means.append(mean)
            print(f"{h:>6} {h + 1:>3} {s:>4} {mean:9.4f} {std:7.4f} {time.perf_counter() - t0:6.1f}", flush=True)
        if len(means) > 1:
            print(f"{h:>6} mean over seeds {np.mean(means):.4f} +- {np.std(means):.4f}")


if __name__ == "__main__":
    main()
