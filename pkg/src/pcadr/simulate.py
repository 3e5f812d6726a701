"""Seeded generator of steady-state flow data with additive Gaussian noise.

Recipe per sample: draw fluctuations for the independent variables around
their base values, solve the constraints exactly for the dependent variables,
then add measurement noise to every variable.

Reproducibility contract: the generator is numpy's default PCG64 seeded with
``spec.seed``.  Gaussian draws happen in two blocks, fluctuations first and
measurement errors second; each block is filled sample-major with variables
in index order.  Fixed seed means bitwise-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConstraintModel, DataSet
from .errors import SingularDependentBlock, SpecValidationError


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    """Everything needed to generate one synthetic steady-state data set.

    Attributes:
        model: constraint model the true values must satisfy.
        independent_names: the n - m variables that are fluctuated directly.
        base_values: nominal value per independent variable.
        fluctuation_sd: steady-state fluctuation SD per independent variable.
        error_sd: measurement-error SD per variable (all of them).
        n_samples: number of samples N.
        seed: RNG seed; fixes the output bitwise.
    """

    model: ConstraintModel
    independent_names: tuple[str, ...]
    base_values: dict[str, float]
    fluctuation_sd: dict[str, float]
    error_sd: dict[str, float]
    n_samples: int
    seed: int
    _dependent_idx: np.ndarray = field(init=False, repr=False)
    _independent_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        model = self.model
        names = model.variable_names
        indep = tuple(str(v) for v in self.independent_names)
        object.__setattr__(self, "independent_names", indep)

        problems = []
        unknown = [v for v in indep if v not in names]
        if unknown:
            problems.append(f"independent: unknown variables {unknown}")
        if len(set(indep)) != len(indep):
            problems.append("independent: duplicate variable names")
        expected = model.n_variables - model.n_constraints
        if len(indep) != expected:
            problems.append(
                f"independent: need {expected} variables "
                f"(n - m), got {len(indep)}"
            )
        for label, mapping, keys in (
            ("base_values", self.base_values, indep),
            ("fluctuation_sd", self.fluctuation_sd, indep),
            ("error_sd", self.error_sd, names),
        ):
            missing = [k for k in keys if k not in mapping]
            extra = [k for k in mapping if k not in keys]
            if missing:
                problems.append(f"{label}: missing entries for {missing}")
            if extra:
                problems.append(f"{label}: unexpected entries for {extra}")
            bad = [k for k, v in mapping.items() if not np.isfinite(v)]
            if bad:
                problems.append(f"{label}: non-finite values for {bad}")
        for label, mapping in (
            ("fluctuation_sd", self.fluctuation_sd),
            ("error_sd", self.error_sd),
        ):
            negative = [k for k, v in mapping.items() if np.isfinite(v) and v < 0]
            if negative:
                problems.append(f"{label}: negative values for {negative}")
        if self.n_samples < 1:
            problems.append(f"samples: must be >= 1, got {self.n_samples}")
        if problems:
            raise SpecValidationError(problems)

        lookup = {v: i for i, v in enumerate(names)}
        ind_idx = np.array([lookup[v] for v in indep], dtype=int)
        dep_idx = np.array([i for i in range(len(names)) if names[i] not in indep])
        object.__setattr__(self, "_independent_idx", ind_idx)
        object.__setattr__(self, "_dependent_idx", dep_idx)

        a_dep = model.matrix[:, dep_idx]
        svals = np.linalg.svd(a_dep, compute_uv=False) if a_dep.size else np.array([])
        if a_dep.size == 0 or svals[-1] <= 1e-10 * svals[0]:
            if model.n_constraints > 0:
                raise SingularDependentBlock(
                    "dependent-variable block of the model is singular; "
                    "pick a different independent set"
                )

    @property
    def dependent_names(self) -> tuple[str, ...]:
        names = self.model.variable_names
        return tuple(names[i] for i in self._dependent_idx)


def simulate(spec: SimulationSpec) -> DataSet:
    """Generate measurements and true values for the given spec.

    The returned DataSet has ``true_values`` populated; every true-value
    column satisfies the model constraints to machine precision.
    """
    model = spec.model
    names = model.variable_names
    n = model.n_variables
    n_samples = spec.n_samples
    ind_idx = spec._independent_idx
    dep_idx = spec._dependent_idx

    rng = np.random.default_rng(spec.seed)
    fluctuations = rng.standard_normal((n_samples, ind_idx.size))
    errors = rng.standard_normal((n_samples, n))

    base = np.array([spec.base_values[names[i]] for i in ind_idx])
    sdf = np.array([spec.fluctuation_sd[names[i]] for i in ind_idx])
    sde = np.array([spec.error_sd[v] for v in names])

    x_ind = base + sdf * fluctuations  # (N, k)
    truth = np.empty((n, n_samples))
    truth[ind_idx] = x_ind.T
    if dep_idx.size:
        a_dep = model.matrix[:, dep_idx]
        a_ind = model.matrix[:, ind_idx]
        truth[dep_idx] = np.linalg.solve(a_dep, -a_ind @ x_ind.T)

    measurements = truth + sde[:, None] * errors.T
    return DataSet(measurements, names, truth)
