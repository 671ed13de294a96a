"""Problem presets: the corner-inclusion benchmark and a manufactured Poisson problem.

Inclusion geometry (a reconstruction; the original figure is not dimensioned):
four squares of side 1/4 inset by 1/8 from the domain corners, numbered
counterclockwise from the bottom left, and a central forcing square F. All
edges lie on multiples of 1/32, so every mesh descended from
``unit_square_mesh(32)`` resolves the subdomains exactly.

Labels: 0 background, 1..4 the inclusions C_1..C_4, 5 the forcing region F.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import DiffusionCoefficient, Forcing
from .mesh import Triangulation, unit_square_mesh

INCLUSIONS = (
    ((0.125, 0.375), (0.125, 0.375)),
    ((0.625, 0.875), (0.125, 0.375)),
    ((0.625, 0.875), (0.625, 0.875)),
    ((0.125, 0.375), (0.625, 0.875)),
)
FORCING_REGION = ((0.375, 0.625), (0.375, 0.625))
GAMMAS = (0.9, 0.6, 0.3, 0.1)
BASE_VALUE = 1.1
FORCING_VALUE = 100.0
PARAM_SCALE = 0.99
N_LABELS = 6


def inclusion_labels(x: np.ndarray) -> np.ndarray:
    """Subdomain label of each point (interior points of a region; boundaries are ambiguous)."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    lab = np.zeros(len(x), dtype=np.int64)
    for r, ((x0, x1), (y0, y1)) in enumerate(INCLUSIONS + (FORCING_REGION,), start=1):
        inside = (x[:, 0] > x0) & (x[:, 0] < x1) & (x[:, 1] > y0) & (x[:, 1] < y1)
        lab[inside] = r
    return lab


def _single_label(x: np.ndarray) -> np.ndarray:
    return np.zeros(len(np.asarray(x).reshape(-1, 2)), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Everything needed to pose the parametric diffusion problem on [0, 1]^2."""

    name: str
    coefficient: DiffusionCoefficient
    forcing: Forcing
    label_of: Callable[[np.ndarray], np.ndarray]
    init_divisions: int = 32
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    exact_grad: Callable[[np.ndarray], np.ndarray] | None = None
    description: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return self.coefficient.n_params

    def initial_mesh(self) -> Triangulation:
        return unit_square_mesh(self.init_divisions, self.label_of)


def _inclusion(n_params: int, name: str) -> ProblemSpec:
    terms = np.zeros((n_params, N_LABELS))
    for n in range(n_params):
        terms[n, n + 1] = GAMMAS[n]
    coeff = DiffusionCoefficient(np.full(N_LABELS, BASE_VALUE), terms, PARAM_SCALE)
    f = np.zeros(N_LABELS)
    f[5] = FORCING_VALUE
    return ProblemSpec(
        name=name,
        coefficient=coeff,
        forcing=Forcing.piecewise(f),
        label_of=inclusion_labels,
        init_divisions=32,
        description={"gammas": GAMMAS[:n_params], "a0": BASE_VALUE,
                     "forcing": FORCING_VALUE, "param_scale": PARAM_SCALE},
    )


def inclusion_4d() -> ProblemSpec:
    return _inclusion(4, "inclusion4d")


def inclusion_reduced(n_params: int) -> ProblemSpec:
    if n_params not in (1, 2):
        raise ValueError("reduced inclusion problem supports 1 or 2 parameters")
    return _inclusion(n_params, f"inclusion{n_params}d")


def manufactured_poisson(init_divisions: int = 4) -> ProblemSpec:
    """a = 1, u = sin(pi x) sin(pi y).

    Carries a single parameter with zero influence so that it runs through the
    same drivers as the parametric problems; the parametric estimator vanishes.
    """

    def exact(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def exact_grad(x):
        return np.pi * np.stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                 np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])], axis=1)

    def rhs(x):
        return 2 * np.pi ** 2 * exact(x)

    return ProblemSpec(
        name="manufactured",
        coefficient=DiffusionCoefficient(np.ones(1), np.zeros((1, 1))),
        forcing=Forcing.function(rhs),
        label_of=_single_label,
        init_divisions=init_divisions,
        exact=exact,
        exact_grad=exact_grad,
    )


PRESETS: dict[str, Callable[[], ProblemSpec]] = {
    "inclusion4d": inclusion_4d,
    "inclusion2d": lambda: inclusion_reduced(2),
    "inclusion1d": lambda: inclusion_reduced(1),
    "manufactured": manufactured_poisson,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown problem preset {name!r}; choose from {sorted(PRESETS)}") from None
