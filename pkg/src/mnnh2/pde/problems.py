"""Problem descriptions and random input fields for the 1D solution maps.

Three maps are supported:

``nlse``
    periodic potential ``V`` on ``[0, 1)`` to the nonlinear Schrodinger ground state.
``rte``
    scattering coefficient ``mu_s`` on ``[0, 1]`` to the slab transport solution.
``ks``
    periodic potential ``V`` on ``[-1, 1)`` to the Kohn-Sham electron density.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

PROBLEMS = ("nlse", "rte", "ks")
N_IMAGES = 3  # periodic images |j| <= 3; Gaussians of width <~0.06 are below 1e-30 beyond that
KS_MAX_ATTEMPTS = 10_000


class SamplingError(RuntimeError):
    """Raised when rejection sampling of well centers gives up."""


@dataclass(frozen=True)
class ProblemSpec:
    """Which map to sample and its physical constants.

    Attributes
    ----------
    problem : {"nlse", "rte", "ks"}
    N : int
        Grid points.
    n_g : int
        Gaussian bumps in the NLSE potential or the RTE scattering coefficient.
    beta : float
        NLSE cubic nonlinearity.
    mu_a : float
        RTE absorption, ``mu_t = mu_s + mu_a``.
    f : float
        RTE constant source.
    n_e : int
        KS electron count (also the number of wells).
    sigma : float
        KS well width.
    tau : float
        NLSE gradient-flow time step.
    tol : float
        NLSE stopping tolerance on successive iterates.
    max_steps : int
        NLSE step budget.
    """

    problem: str = "nlse"
    N: int = 80
    n_g: int = 2
    beta: float = 10.0
    mu_a: float = 0.2
    f: float = 1.0
    n_e: int = 2
    sigma: float = 0.05
    tau: float = 0.01
    tol: float = 1e-10
    max_steps: int = 20_000

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even number >= 4, got {self.N}")
        if self.n_g < 1 or self.n_e < 1:
            raise ValueError("n_g and n_e must be positive")
        if self.sigma <= 0 or self.tau <= 0 or self.tol <= 0 or self.mu_a < 0:
            raise ValueError("sigma, tau, tol must be positive and mu_a non-negative")

    @property
    def domain(self) -> tuple:
        return (-1.0, 1.0) if self.problem == "ks" else (0.0, 1.0)

    @property
    def length(self) -> float:
        a, b = self.domain
        return b - a

    @property
    def h(self) -> float:
        return self.length / self.N

    def grid(self) -> np.ndarray:
        """Periodic nodes ``a + k h`` (nlse, ks) or cell centers ``(k + 1/2) h`` (rte)."""
        a, _ = self.domain
        k = np.arange(self.N)
        return (k + 0.5) * self.h if self.problem == "rte" else a + k * self.h

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GaussianMixture:
    """Sum of Gaussian bumps ``sign * sum_i rho_i g(x - c_i)``.

    ``kind="heat"`` uses ``g(x) = exp(-x^2 / (2T)) / sqrt(2 pi T)`` with a shared
    ``T`` (NLSE, RTE); ``kind="well"`` uses ``g(x) = exp(-x^2 / (2 sigma^2))``
    (KS). With ``period`` set, images shifted by ``j * period`` for
    ``|j| <= 3`` are summed.
    """

    rho: np.ndarray
    centers: np.ndarray
    width: float
    kind: str = "heat"
    sign: float = 1.0
    period: float = None

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("Gaussian width must be positive")
        if self.kind not in ("heat", "well"):
            raise ValueError(f"unknown bump kind {self.kind!r}")
        if len(self.rho) != len(self.centers):
            raise ValueError("one amplitude per center required")

    @property
    def n_g(self) -> int:
        return len(self.rho)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        shifts = [0.0] if self.period is None else [j * self.period for j in range(-N_IMAGES, N_IMAGES + 1)]
        out = np.zeros_like(x)
        if self.kind == "heat":
            T = self.width
            scale, denom = 1.0 / np.sqrt(2 * np.pi * T), 2 * T
        else:
            scale, denom = 1.0, 2 * self.width**2
        for r, c in zip(self.rho, self.centers):
            for s in shifts:
                out += r * scale * np.exp(-((x - c - s) ** 2) / denom)
        return self.sign * out


def periodic_distance(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


def draw_mixture(spec: ProblemSpec, rng: np.random.Generator) -> GaussianMixture:
    """Draw the random input field parameters for ``spec.problem``."""
    if spec.problem == "nlse":
        rho = rng.uniform(1.0, 4.0, spec.n_g)
        c = rng.uniform(0.0, 1.0, spec.n_g)
        T = rng.uniform(2e-3, 4e-3)
        return GaussianMixture(rho, c, T, "heat", -1.0, period=1.0)
    if spec.problem == "rte":
        rho = rng.uniform(0.1, 0.3, spec.n_g)
        c = rng.uniform(0.2, 0.8, spec.n_g)
        T = rng.uniform(2e-3, 4e-3)
        return GaussianMixture(rho, c, T, "heat", 1.0)
    a, b = spec.domain
    centers = []
    attempts = 0
    while len(centers) < spec.n_e:
        attempts += 1
        if attempts > KS_MAX_ATTEMPTS:
            raise SamplingError(f"could not place {spec.n_e} wells {2 * spec.sigma} apart "
                                f"after {KS_MAX_ATTEMPTS} attempts")
        c = rng.uniform(a, b)
        if all(periodic_distance(c, o, spec.length) > 2 * spec.sigma for o in centers):
            centers.append(c)
    rho = rng.uniform(0.8, 1.2, spec.n_e)
    return GaussianMixture(rho, np.array(centers), spec.sigma, "well", -1.0, period=spec.length)


def sample_potential(spec: ProblemSpec, seed) -> np.ndarray:
    """Grid samples of a random input field.

    ``seed`` may be an int, a :class:`numpy.random.SeedSequence` or a
    :class:`numpy.random.Generator`.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return draw_mixture(spec, rng)(spec.grid())
