"""Paired ``(v, u)`` datasets for the 1D solution maps.

Sample ``i`` draws from its own generator, spawned from
``SeedSequence(seed)``, so a dataset is a pure function of ``(spec, count,
seed)`` whatever the number of workers. Every target is checked against its
solver's residual oracle before it is returned.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..train import Dataset
from .ks import DegenerateGapError, ks_residual, solve_ks_states
from .nlse import nlse_residual, solve_nlse
from .problems import ProblemSpec, draw_mixture
from .rte import rte_residual, solve_rte_1d

NLSE_RESIDUAL_TOL = 1e-6
KS_RESIDUAL_TOL = 1e-10
KS_CHARGE_TOL = 1e-12
RTE_RESIDUAL_TOL = 1e-10
KS_MAX_REDRAWS = 100


class SampleError(RuntimeError):
    """A sample failed to solve or failed its residual oracle."""


def _one_sample(spec: ProblemSpec, seq: np.random.SeedSequence) -> tuple:
    rng = np.random.default_rng(seq)
    x = spec.grid()
    if spec.problem == "nlse":
        v = draw_mixture(spec, rng)(x)
        u = solve_nlse(v, spec)
        res = float(nlse_residual(u, v, spec)[0])
        if res > NLSE_RESIDUAL_TOL:
            raise SampleError(f"NLSE residual {res:.3e} exceeds {NLSE_RESIDUAL_TOL}")
        return v, u, res
    if spec.problem == "rte":
        v = draw_mixture(spec, rng)(x)
        u = solve_rte_1d(v, spec)
        res = rte_residual(u, v, spec)
        if res > RTE_RESIDUAL_TOL:
            raise SampleError(f"RTE residual {res:.3e} exceeds {RTE_RESIDUAL_TOL}")
        if np.any(u <= 0):
            raise SampleError("RTE solution is not strictly positive")
        return v, u, res
    for _ in range(KS_MAX_REDRAWS):
        v = draw_mixture(spec, rng)(x)
        try:
            eps, psi = solve_ks_states(v, spec)
        except DegenerateGapError:
            continue
        res = float(ks_residual(v, eps, psi, spec).max())
        u = np.sum(psi * psi, axis=0)
        charge = abs(spec.h * u.sum() - spec.n_e)
        if res > KS_RESIDUAL_TOL or charge > KS_CHARGE_TOL:
            raise SampleError(f"KS residual {res:.3e} or charge error {charge:.3e} too large")
        return v, u, res
    raise SampleError(f"no non-degenerate KS potential in {KS_MAX_REDRAWS} draws")


def generate_dataset(spec: ProblemSpec, count: int, seed: int = 0, workers: int = 1,
                     return_residuals: bool = False):
    """Draw ``count`` inputs and solve for their targets.

    Parameters
    ----------
    spec : ProblemSpec
    count : int
    seed : int
        Root seed; sample ``i`` uses the ``i``-th spawned child.
    workers : int
        Thread count for solving samples concurrently.
    return_residuals : bool
        Also return the per-sample residual norms.

    Raises
    ------
    SampleError
        Naming the index of the first sample that failed.
    """
    if count < 1:
        raise ValueError("count must be positive")
    seqs = np.random.SeedSequence(seed).spawn(count)

    def run(i):
        try:
            return _one_sample(spec, seqs[i])
        except Exception as exc:  # re-raised with the sample index attached
            raise SampleError(f"sample {i}: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(run, range(count)))
    else:
        out = [run(i) for i in range(count)]
    v = np.stack([o[0] for o in out])
    u = np.stack([o[1] for o in out])
    data = Dataset(v, u)
    return (data, np.array([o[2] for o in out])) if return_residuals else data
