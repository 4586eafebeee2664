"""A short tour of the library API on the two-moons toy problem.

Trains one ERM and one mixup model with identical seeds, then compares
their behaviour between training points and under an FGSM attack.

    python demos/walkthrough.py [epochs]
"""

import sys

import numpy as np

from mixlab import data, evaluate, nn, train, vicinal
from mixlab.rng import Streams


def main(epochs=100):
    seed = 0
    streams = Streams(seed)
    ds = data.make_synthetic("two_moons", 1000, 0.1, streams["data"])
    train_ds, test_ds = data.stratified_split(ds, 0.2, streams["split"])

    # lambda ~ Beta(alpha, alpha): small alpha stays near the endpoints, alpha=1 is uniform
    for alpha in (0.2, 1.0, 8.0):
        lam = vicinal.sample_lambda(alpha, Streams(1)["lambda"], size=10_000)
        print(f"Beta({alpha:g},{alpha:g}): mean {lam.mean():.3f}, share within 0.1 of an endpoint "
              f"{np.mean((lam < 0.1) | (lam > 0.9)):.2f}")

    y = data.one_hot(np.array([0]), 2)
    print("smoothed one-hot (eps=0.1, C=2):", vicinal.smooth_labels(y, 0.1)[0])

    config = train.TrainConfig(epochs=epochs, batch_size=64, seed=seed)
    lo, hi = train_ds.bounds()
    eps = 0.1 * (hi - lo)
    for policy in (vicinal.ERM(), vicinal.Mixup(alpha=1.0)):
        model = nn.init_mlp(nn.MlpSpec(2, (64, 64), 2), Streams(seed)["init"])
        model, logs = train.fit(model, train_ds, test_ds, policy, config)
        rep = evaluate.inbetween_analysis(model, train_ds, 1000, np.linspace(0.1, 0.9, 9), Streams(seed)["pairs"])
        fgsm = evaluate.attack_eval(model, model, test_ds, evaluate.AttackSpec("fgsm", eps), (lo, hi))
        print(f"\n{vicinal.policy_label(policy)}")
        print(f"  test error            {logs[-1].test_error:.1f}%")
        print(f"  in-between miss rate  {rep.miss_rate:.2f}%")
        print(f"  median |grad_x loss|  {rep.gradient_norm_median:.3f}")
        print(f"  FGSM error (eps=10%)  {fgsm:.1f}%")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100)
