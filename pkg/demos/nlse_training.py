"""Learn the potential-to-ground-state map of the periodic cubic NLSE.

Trains a cnn-mode MNN-H2 and a larger plain CNN on the same data and prints
their test errors. ``--epochs 500`` reproduces the acceptance setting (about
ten minutes per network); the default is a quick look.
"""

import argparse
import time

from mnnh2.model import MNNH2, NetworkConfig, build_plain_cnn
from mnnh2.pde import ProblemSpec, generate_dataset
from mnnh2.train import Nadam, TrainConfig, train

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--epochs", type=int, default=50)
parser.add_argument("--samples", type=int, default=2500)
args = parser.parse_args()

t0 = time.time()
data = generate_dataset(ProblemSpec("nlse"), args.samples, seed=0)
n_train = 4 * args.samples // 5
train_set, test_set = data.subset(slice(0, n_train)), data.subset(slice(n_train, None))
print(f"{args.samples} NLSE samples on N={data.N} in {time.time() - t0:.0f} s")

nets = {
    "MNN-H2 (cnn, r=6, K=5)": MNNH2(NetworkConfig(L=4, m=5, r=6, K=5, sharing_mode="cnn"), seed=1),
    "plain CNN (5x10, w=13)": build_plain_cnn(5, 10, 13, data.N, seed=1),
}
for name, net in nets.items():
    t0 = time.time()
    cfg = TrainConfig(epochs=args.epochs, eval_every=max(1, args.epochs // 5))
    net, _, hist = train(net, train_set, cfg, Nadam(lr=1e-3), test_set)
    print(f"{name}: {net.count_params()} params, eps_train {hist.column('eps_train')[-1]:.2e}, "
          f"eps_test {hist.column('eps_test')[-1]:.2e} ({time.time() - t0:.0f} s)")
