"""CSV and JSON serialization used by the command-line surface.

On-disk conventions:

* Data CSV: header row of variable names, one row per sample (N x n on disk;
  transposed to n x N in memory).
* Model CSV: header row of variable names, one row of coefficients per
  constraint.
* Noise CSV: either a single ``sd`` column (diagonal covariance, rows in the
  data's variable order) or a full matrix with the variable names as header.
* Simulation spec: JSON document, ``"spec_version": 1``.

All writes are atomic: content goes to a temporary file in the target
directory which is then renamed, so error paths never leave partial files.
Floats are written with 17 significant digits, which round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .core import ConstraintModel, DataSet, ModelProvenance, NoiseModel
from .errors import SpecValidationError
from .simulate import SimulationSpec

SPEC_VERSION = 1

_FLOAT_FMT = "%.17g"


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pcadr-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_row(values):
    return [_FLOAT_FMT % v for v in values]


def _csv_text(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_data_csv(path, variable_names, matrix: np.ndarray):
    """Write an (n, N) matrix as N sample rows under the variable-name header."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != len(variable_names):
        raise SpecValidationError(
            [f"data has {matrix.shape[0]} rows for {len(variable_names)} names"]
        )
    text = _csv_text(variable_names, (_format_row(col) for col in matrix.T))
    atomic_write_text(path, text)


def _read_csv(path):
    with open(path, newline="") as handle:
        rows = [row for row in csv.reader(handle) if row]
    if not rows:
        raise SpecValidationError([f"{path}: file is empty"])
    return rows[0], rows[1:]


def _parse_float_rows(path, header, rows):
    if not rows:
        raise SpecValidationError([f"{path}: no numeric rows after the header"])
    parsed = []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SpecValidationError(
                [f"{path}:{i}: expected {len(header)} fields, got {len(row)}"]
            )
        try:
            parsed.append([float(v) for v in row])
        except ValueError as exc:
            raise SpecValidationError([f"{path}:{i}: {exc}"]) from exc
    return np.array(parsed)


def read_data_csv(path, truth_path=None) -> DataSet:
    """Read a data CSV (optionally paired with a truth CSV) into a DataSet."""
    header, rows = _read_csv(path)
    values = _parse_float_rows(path, header, rows).T
    truth = None
    if truth_path is not None:
        theader, trows = _read_csv(truth_path)
        if theader != header:
            raise SpecValidationError(
                [f"{truth_path}: variable names differ from {path}"]
            )
        truth = _parse_float_rows(truth_path, theader, trows).T
    return DataSet(values, tuple(header), truth)


def write_model_csv(path, model: ConstraintModel):
    text = _csv_text(
        model.variable_names, (_format_row(row) for row in model.matrix)
    )
    atomic_write_text(path, text)


def read_model_csv(path, provenance=ModelProvenance.FIRST_PRINCIPLES) -> ConstraintModel:
    header, rows = _read_csv(path)
    matrix = _parse_float_rows(path, header, rows)
    return ConstraintModel(matrix, tuple(header), provenance)


def write_noise_csv(path, noise: NoiseModel, variable_names=None):
    """Write a noise model: ``sd`` column when diagonal, full matrix otherwise."""
    sigma = noise.sigma
    if np.allclose(sigma, np.diag(np.diag(sigma))):
        text = _csv_text(["sd"], ([_FLOAT_FMT % v] for v in noise.sd))
    else:
        if variable_names is None:
            variable_names = [f"v{i + 1}" for i in range(noise.n_variables)]
        text = _csv_text(variable_names, (_format_row(row) for row in sigma))
    atomic_write_text(path, text)


def read_noise_csv(path, n_variables: int) -> NoiseModel:
    """Read a noise CSV; a single ``sd`` column means a diagonal covariance."""
    header, rows = _read_csv(path)
    if header == ["sd"]:
        values = _parse_float_rows(path, header, rows)[:, 0]
        if values.size != n_variables:
            raise SpecValidationError(
                [f"{path}: {values.size} sd rows for {n_variables} variables"]
            )
        return NoiseModel.from_sd(values)
    matrix = _parse_float_rows(path, header, rows)
    if matrix.shape != (n_variables, n_variables):
        raise SpecValidationError(
            [
                f"{path}: full covariance must be {n_variables}x{n_variables}, "
                f"got {matrix.shape[0]}x{matrix.shape[1]}"
            ]
        )
    return NoiseModel(matrix)


# ----------------------------------------------------------------------------
# Simulation spec JSON
# ----------------------------------------------------------------------------


def spec_to_dict(spec: SimulationSpec) -> dict:
    return {
        "spec_version": SPEC_VERSION,
        "variables": list(spec.model.variable_names),
        "constraints": [list(map(float, row)) for row in spec.model.matrix],
        "independent": list(spec.independent_names),
        "base_values": dict(spec.base_values),
        "fluctuation_sd": dict(spec.fluctuation_sd),
        "error_sd": dict(spec.error_sd),
        "samples": spec.n_samples,
        "seed": spec.seed,
    }


def spec_from_dict(document: dict, source="<spec>") -> SimulationSpec:
    """Build a SimulationSpec from a JSON document, with per-field messages."""
    problems = []

    def need(key, kind, kindname):
        value = document.get(key)
        if value is None:
            problems.append(f"{key}: missing required field")
            return None
        if not isinstance(value, kind):
            problems.append(f"{key}: expected {kindname}")
            return None
        return value

    version = document.get("spec_version")
    if version != SPEC_VERSION:
        problems.append(f"spec_version: expected {SPEC_VERSION}, got {version!r}")
    variables = need("variables", list, "a list of names")
    constraints = need("constraints", list, "a list of coefficient rows")
    independent = need("independent", list, "a list of names")
    base_values = need("base_values", dict, "a name-to-value map")
    fluctuation_sd = need("fluctuation_sd", dict, "a name-to-value map")
    error_sd = need("error_sd", dict, "a name-to-value map")
    samples = need("samples", int, "an integer")
    seed = need("seed", int, "an integer")
    if problems:
        raise SpecValidationError([f"{source}: {p}" for p in problems])

    try:
        matrix = np.array(constraints, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != len(variables):
            problems.append(
                "constraints: rows must all have one coefficient per variable"
            )
    except (TypeError, ValueError):
        problems.append("constraints: rows must be numeric lists")
    for label, mapping in (
        ("base_values", base_values),
        ("fluctuation_sd", fluctuation_sd),
        ("error_sd", error_sd),
    ):
        for key, value in mapping.items():
            if not isinstance(value, (int, float)):
                problems.append(f"{label}.{key}: expected a number")
    if problems:
        raise SpecValidationError([f"{source}: {p}" for p in problems])

    model = ConstraintModel(matrix, tuple(variables))
    try:
        return SimulationSpec(
            model=model,
            independent_names=tuple(independent),
            base_values={str(k): float(v) for k, v in base_values.items()},
            fluctuation_sd={str(k): float(v) for k, v in fluctuation_sd.items()},
            error_sd={str(k): float(v) for k, v in error_sd.items()},
            n_samples=samples,
            seed=seed,
        )
    except SpecValidationError as exc:
        raise SpecValidationError([f"{source}: {m}" for m in exc.messages]) from exc


def read_sim_spec(path) -> SimulationSpec:
    with open(path) as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SpecValidationError([f"{path}: invalid JSON ({exc})"]) from exc
    if not isinstance(document, dict):
        raise SpecValidationError([f"{path}: top level must be an object"])
    return spec_from_dict(document, source=os.fspath(path))
