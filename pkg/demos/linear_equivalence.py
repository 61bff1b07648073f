"""A K=1 linear MNN-H2 loaded with the blocks of an H2 matrix reproduces its matvec.

Run with ``python3 demos/linear_equivalence.py``.
"""

import numpy as np

from mnnh2.h2core import build_tree, matvec, random_h2
from mnnh2.model import build_linear_h2_nn

for d, L, m, r in [(1, 4, 5, 3), (1, 5, 4, 4), (2, 3, 4, 2)]:
    tree = build_tree(L, m, d)
    h2 = random_h2(tree, r, seed=0)
    net = build_linear_h2_nn(h2)
    v = np.random.default_rng(1).standard_normal((8,) + (tree.N,) * d)
    ref, out = matvec(h2, v), net.predict(v)
    gap = np.linalg.norm(out - ref) / np.linalg.norm(ref)
    print(f"d={d} N={tree.N} r={r}: {net.count_params()} params, relative gap {gap:.1e}")
