"""Uniform periodic cluster trees and H2-matrices on them.

The grid has ``N = 2**L * m`` points per axis on the unit torus (``d`` = 1 or
2). Boxes at level ``l`` form a ``2**l`` per axis lattice and are numbered in
column-major order, ``b = i1 + 2**l * i2``. Grid points are numbered the same
way, ``g = x1 + N * x2``, which is also how a 2D field is flattened into a
vector.

An :class:`H2Matrix` stores

* ``U``, ``V``: leaf bases, shape ``(n_leaf, m**d, r)``;
* ``B[l]``, ``C[l]`` for ``2 <= l < L``: transfer blocks indexed by the
  *child* box at level ``l + 1``, shape ``(n_box(l + 1), r, r)``;
* ``M[l]`` for ``2 <= l <= L``: coupling blocks aligned with
  ``tree.il[l]``, shape ``(n_box(l), n_il, r, r)``;
* ``A_ad``: near-field blocks aligned with ``tree.nl[L]``, shape
  ``(n_leaf, n_nl, m**d, m**d)``.

Rows inside a leaf block follow the local column-major order
``p1 + m * p2``; rows of a coarser box are the concatenation of its
children's rows in child order ``k1 + 2 * k2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

MAX_DENSE = 4096


def _box_coords(level: int, d: int) -> np.ndarray:
    n = 2**level
    b = np.arange(n**d)
    return np.stack([(b // n**k) % n for k in range(d)], axis=1)


def _box_index(coords: np.ndarray, level: int) -> np.ndarray:
    n = 2**level
    coords = np.asarray(coords) % n
    return sum(coords[..., k] * n**k for k in range(coords.shape[-1]))


@dataclass
class IndexTree:
    """Dyadic partition of the periodic grid with neighbor/interaction lists.

    ``children[l]`` (for ``l < L``) has shape ``(n_box(l), 2**d)``;
    ``parent[l]`` (for ``l > 0``) has shape ``(n_box(l),)``; ``nl[l]`` and
    ``il[l]`` (``l >= 2``) are integer arrays with one row per box.
    """

    L: int
    m: int
    d: int
    children: dict = field(default_factory=dict)
    parent: dict = field(default_factory=dict)
    nl: dict = field(default_factory=dict)
    il: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return 2**self.L * self.m

    @property
    def npoints(self) -> int:
        return self.N**self.d

    def n_box(self, level: int) -> int:
        return 2 ** (level * self.d)

    def leaf_points(self) -> np.ndarray:
        """Global grid index of every point, shape ``(n_leaf, m**d)``."""
        return self.box_points(self.L)

    def box_points(self, level: int) -> np.ndarray:
        """Global indices of the points of every box at ``level``, in block row order."""
        if level == self.L:
            coords = _box_coords(self.L, self.d) * self.m
            local = np.stack(
                [(np.arange(self.m**self.d) // self.m**k) % self.m for k in range(self.d)], axis=1
            )
            pts = coords[:, None, :] + local[None, :, :]
            return sum(pts[..., k] * self.N**k for k in range(self.d))
        fine = self.box_points(level + 1)
        return fine[self.children[level]].reshape(self.n_box(level), -1)


def build_tree(L: int, m: int, d: int = 1) -> IndexTree:
    """Build the level structure from the set definitions.

    ``NL(I)`` holds the boxes cyclically adjacent to ``I`` (``I`` included) and
    ``IL(I) = C(NL(P(I))) - NL(I)``.
    """
    if L < 3:
        raise ValueError(f"need L >= 3, got {L}")
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if d not in (1, 2):
        raise ValueError(f"d must be 1 or 2, got {d}")
    tree = IndexTree(L=L, m=m, d=d)
    kids = np.array(list(product((0, 1), repeat=d)))[:, ::-1]  # column-major child order
    shifts = np.array(list(product((-1, 0, 1), repeat=d)))
    for level in range(L + 1):
        coords = _box_coords(level, d)
        if level < L:
            tree.children[level] = _box_index(2 * coords[:, None, :] + kids[None, :, :], level + 1)
        if level > 0:
            tree.parent[level] = _box_index(coords // 2, level - 1)
        nbrs = _box_index(coords[:, None, :] + shifts[None, :, :], level)
        tree.nl[level] = [np.unique(row) for row in nbrs]
    for level in range(2, L + 1):
        il = []
        for b in range(tree.n_box(level)):
            p = tree.parent[level][b]
            cand = set(tree.children[level - 1][tree.nl[level - 1][p]].ravel().tolist())
            il.append(sorted(cand - set(tree.nl[level][b].tolist())))
        tree.il[level] = np.array(il, dtype=np.int64)
    for level in range(L + 1):
        tree.nl[level] = _stack_ragged(tree.nl[level])
    return tree


def _stack_ragged(rows):
    sizes = {len(r) for r in rows}
    if len(sizes) == 1:
        return np.array(rows, dtype=np.int64)
    return rows


@dataclass
class H2Matrix:
    tree: IndexTree
    r: int
    U: np.ndarray
    V: np.ndarray
    B: dict
    C: dict
    M: dict
    A_ad: np.ndarray

    @property
    def L(self) -> int:
        return self.tree.L

    @property
    def m(self) -> int:
        return self.tree.m

    @property
    def d(self) -> int:
        return self.tree.d

    def n_stored(self) -> int:
        """Number of stored scalars over all factors."""
        total = self.U.size + self.V.size + self.A_ad.size
        total += sum(b.size for b in self.B.values()) + sum(c.size for c in self.C.values())
        return total + sum(x.size for x in self.M.values())


def random_h2(tree: IndexTree, r: int, seed: int = 0, symmetric: bool = False) -> H2Matrix:
    """Structure-conforming H2-matrix with seeded Gaussian factors.

    Entries are scaled by ``1/sqrt(fan_in)`` so that products of factors stay
    of order one. With ``symmetric=True`` the column factors mirror the row
    factors and every coupling/near-field block pair is transposed, giving a
    symmetric dense matrix.
    """
    md = tree.m**tree.d
    if r > md:
        raise ValueError(f"rank r={r} exceeds leaf size m**d={md}")
    rng = np.random.default_rng(seed)
    L, nk = tree.L, 2**tree.d

    def gauss(shape, fan_in):
        return rng.standard_normal(shape) / np.sqrt(fan_in)

    U = gauss((tree.n_box(L), md, r), md)
    V = U.copy() if symmetric else gauss((tree.n_box(L), md, r), md)
    B, C, M = {}, {}, {}
    for level in range(2, L):
        B[level] = gauss((tree.n_box(level + 1), r, r), nk * r)
        C[level] = B[level].copy() if symmetric else gauss((tree.n_box(level + 1), r, r), nk * r)
    for level in range(2, L + 1):
        il = tree.il[level]
        M[level] = gauss(il.shape + (r, r), il.shape[1] * r)
        if symmetric:
            M[level] = _symmetrize_pairs(M[level], il)
    nl = tree.nl[L]
    A_ad = gauss(nl.shape + (md, md), nl.shape[1] * md)
    if symmetric:
        A_ad = _symmetrize_pairs(A_ad, nl)
    return H2Matrix(tree, r, U, V, B, C, M, A_ad)


def _symmetrize_pairs(blocks: np.ndarray, lists: np.ndarray) -> np.ndarray:
    out = blocks.copy()
    for i in range(lists.shape[0]):
        for k, j in enumerate(lists[i]):
            if j == i:
                out[i, k] = 0.5 * (blocks[i, k] + blocks[i, k].T)
            elif j < i:
                kk = int(np.nonzero(lists[j] == i)[0][0])
                out[i, k] = blocks[j, kk].T
    return out


def _as_flat(h2: H2Matrix, v: np.ndarray):
    """Return ``(flat, batch_shape, grid_shape)`` for a grid field or a batch of them."""
    v = np.asarray(v)
    npts, d, N = h2.tree.npoints, h2.d, h2.tree.N
    grid = (N,) * d
    if v.shape == grid or v.shape == (npts,):
        return v.reshape(1, npts, order="F") if d == 2 else v.reshape(1, npts), (), v.shape
    if v.shape[1:] == grid or v.shape[1:] == (npts,):
        flat = v.reshape(v.shape[0], npts, order="F")
        return flat, (v.shape[0],), v.shape[1:]
    raise ValueError(f"input of shape {v.shape} does not match a grid of {grid}")


def matvec(h2: H2Matrix, v: np.ndarray) -> np.ndarray:
    """Apply the H2-matrix with the nested down/across/up sweep.

    ``v`` is a grid field of shape ``(N,)*d`` (or ``(N**d,)``), or a batch of
    them with a leading batch axis. The result has the same shape.
    """
    tree, L = h2.tree, h2.L
    flat, batch, grid = _as_flat(h2, v)
    pts = tree.leaf_points()
    vb = flat[:, pts]  # (batch, leaf, m^d)

    u_ad = np.einsum("ikab,zikb->zia", h2.A_ad, vb[:, tree.nl[L]])
    xi = {L: np.einsum("ipr,zip->zir", h2.V, vb)}
    for level in range(L - 1, 1, -1):
        t = np.einsum("jab,zja->zjb", h2.C[level], xi[level + 1])
        xi[level] = t[:, tree.children[level]].sum(axis=2)
    zeta = {lv: np.einsum("ikab,zikb->zia", h2.M[lv], xi[lv][:, tree.il[lv]]) for lv in range(2, L + 1)}

    chi = np.zeros_like(zeta[2])
    for level in range(2, L):
        chi = chi + zeta[level]
        chi = np.einsum("jab,zjb->zja", h2.B[level], chi[:, tree.parent[level + 1]])
    chi = chi + zeta[L]
    u_leaf = np.einsum("ipr,zir->zip", h2.U, chi) + u_ad

    out = np.empty_like(flat, dtype=np.result_type(flat, h2.U))
    out[:, pts] = u_leaf
    if h2.d == 2 and len(grid) == 2:
        out = out.reshape((out.shape[0],) + grid, order="F")
    else:
        out = out.reshape((out.shape[0],) + grid)
    return out if batch else out[0]


def level_bases(h2: H2Matrix):
    """Explicit nested row/column bases at every level ``2..L``.

    Returns two dicts mapping level to arrays of shape ``(n_box, pts_per_box, r)``.
    """
    tree, L = h2.tree, h2.L
    Ub, Vb = {L: h2.U}, {L: h2.V}
    for level in range(L - 1, 1, -1):
        kids = tree.children[level]
        Ub[level] = np.einsum("ikpa,ikab->ikpb", Ub[level + 1][kids], h2.B[level][kids]).reshape(
            tree.n_box(level), -1, h2.r
        )
        Vb[level] = np.einsum("ikpa,ikab->ikpb", Vb[level + 1][kids], h2.C[level][kids]).reshape(
            tree.n_box(level), -1, h2.r
        )
    return Ub, Vb


def assemble_dense(h2: H2Matrix, levels=None, adjacent: bool = True) -> np.ndarray:
    """Dense matrix ``sum_l U^l M^l (V^l)^T + A_ad`` in flat column-major grid order.

    ``levels`` restricts the far-field sum to the given levels and
    ``adjacent=False`` drops the near field; both are for inspecting single
    terms of the decomposition.
    """
    tree, L = h2.tree, h2.L
    n = tree.npoints
    if n > MAX_DENSE:
        raise ValueError(f"refusing dense assembly of size {n} > {MAX_DENSE}")
    A = np.zeros((n, n), dtype=h2.U.dtype)
    Ub, Vb = level_bases(h2)
    for level in range(2, L + 1) if levels is None else levels:
        pts = tree.box_points(level)
        for i in range(tree.n_box(level)):
            for k, j in enumerate(tree.il[level][i]):
                A[np.ix_(pts[i], pts[j])] += Ub[level][i] @ h2.M[level][i, k] @ Vb[level][j].T
    if adjacent:
        pts = tree.leaf_points()
        for i in range(tree.n_box(L)):
            for k, j in enumerate(tree.nl[L][i]):
                A[np.ix_(pts[i], pts[j])] += h2.A_ad[i, k]
    return A


def _top_left_vectors(X: np.ndarray, r: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(X, full_matrices=False)
    u = u[:, :r]
    if u.shape[1] < r:
        u = np.hstack([u, np.zeros((u.shape[0], r - u.shape[1]))])
    return u


def compress_dense(A: np.ndarray, tree: IndexTree, r: int) -> H2Matrix:
    """Fixed-rank H2 approximation of a dense matrix.

    Leaf bases are the leading left singular vectors of each leaf's far-field
    row (column) block. Going up, the children's bases are projected onto the
    parent's far-field block and truncated to rank ``r``, which yields the
    transfer blocks. Coupling blocks are Galerkin projections onto the nested
    bases; near-field blocks are copied. When a leaf holds fewer than ``r``
    points the surplus basis columns are zero.
    """
    A = np.asarray(A, dtype=float)
    n, L = tree.npoints, tree.L
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match tree with {n} points")
    nk = 2**tree.d

    def far_points(level, i):
        mask = np.ones(n, dtype=bool)
        mask[tree.box_points(level)[tree.nl[level][i]].ravel()] = False
        return np.nonzero(mask)[0]

    leaf = tree.leaf_points()
    nleaf = tree.n_box(L)
    U = np.empty((nleaf, leaf.shape[1], r))
    V = np.empty_like(U)
    for i in range(nleaf):
        far = far_points(L, i)
        U[i] = _top_left_vectors(A[np.ix_(leaf[i], far)], r)
        V[i] = _top_left_vectors(A[np.ix_(far, leaf[i])].T, r)

    B, C = {}, {}
    Ub, Vb = {L: U}, {L: V}
    for level in range(L - 1, 1, -1):
        pts_fine = tree.box_points(level + 1)
        B[level] = np.empty((tree.n_box(level + 1), r, r))
        C[level] = np.empty_like(B[level])
        Ub[level] = np.empty((tree.n_box(level), nk * pts_fine.shape[1], r))
        Vb[level] = np.empty_like(Ub[level])
        for i in range(tree.n_box(level)):
            far = far_points(level, i)
            kids = tree.children[level][i]
            rows = np.vstack([Ub[level + 1][j].T @ A[np.ix_(pts_fine[j], far)] for j in kids])
            cols = np.vstack([Vb[level + 1][j].T @ A[np.ix_(far, pts_fine[j])].T for j in kids])
            qb, qc = _top_left_vectors(rows, r), _top_left_vectors(cols, r)
            for k, j in enumerate(kids):
                B[level][j] = qb[k * r:(k + 1) * r]
                C[level][j] = qc[k * r:(k + 1) * r]
            Ub[level][i] = np.vstack([Ub[level + 1][j] @ B[level][j] for j in kids])
            Vb[level][i] = np.vstack([Vb[level + 1][j] @ C[level][j] for j in kids])

    M = {}
    for level in range(2, L + 1):
        pts = tree.box_points(level)
        il = tree.il[level]
        M[level] = np.empty(il.shape + (r, r))
        for i in range(il.shape[0]):
            for k, j in enumerate(il[i]):
                M[level][i, k] = Ub[level][i].T @ A[np.ix_(pts[i], pts[j])] @ Vb[level][j]
    nl = tree.nl[L]
    A_ad = np.empty(nl.shape + (leaf.shape[1], leaf.shape[1]))
    for i in range(nleaf):
        for k, j in enumerate(nl[i]):
            A_ad[i, k] = A[np.ix_(leaf[i], leaf[j])]
    return H2Matrix(tree, r, U, V, B, C, M, A_ad)


def identity_h2(tree: IndexTree, r: int) -> H2Matrix:
    """H2-matrix of the identity: zero far field, identity diagonal near-field blocks."""
    md = tree.m**tree.d
    h2 = random_h2(tree, min(r, md), seed=0)
    for level in h2.M:
        h2.M[level][:] = 0.0
    h2.A_ad[:] = 0.0
    nl = tree.nl[tree.L]
    for i in range(nl.shape[0]):
        h2.A_ad[i, int(np.nonzero(nl[i] == i)[0][0])] = np.eye(md)
    return h2
