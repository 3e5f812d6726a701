"""Command-line surface: simulate, reconcile, identify, scan.

Exit codes are a stable scripting contract: 0 success, 2 input validation
failure, 3 numerical failure, 4 non-convergence (outputs are still written).

Shipped presets (``--preset example1`` .. ``example7``) bundle the six-stream
flow-network simulation with a per-example analysis setup, so each worked
example is reproducible by one command.  Explicit flags override preset
values.  Reports print 6 significant digits; CSV files carry full precision.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

import numpy as np

from . import fileio
from .core import ConstraintModel, DataSet, NoiseModel, NoiseStructure
from .diagnostics import alpha_metric, regression_compare, rmse_report, subspace_angle
from .errors import (
    NoConvergence,
    OrderConflict,
    PcadrError,
    SpecValidationError,
)
from .ipca import IpcaConfig, ipca, order_scan
from .known_constraints import identify_with_known
from .pca import detect_order, pca_identify
from .reconcile import measured_mask, reconcile_full, reconcile_partial
from .simulate import simulate

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_NOCONVERGENCE = 4

_NUMERICAL_ERRORS = (
    "SingularInnerMatrix",
    "CholeskyFailure",
    "OptimizerDiverged",
    "SingularDependentBlock",
)

_STRUCTURES = {
    "diagonal": NoiseStructure.DIAGONAL,
    "scaled-identity": NoiseStructure.SCALED_IDENTITY,
    "full": NoiseStructure.FULL,
}


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _fmt_list(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def _load_preset(name: str) -> dict:
    ref = resources.files("pcadr.presets").joinpath(f"{name}.json")
    if not ref.is_file():
        available = sorted(
            p.name[: -len(".json")]
            for p in resources.files("pcadr.presets").iterdir()
            if p.name.endswith(".json")
        )
        raise SpecValidationError(
            [f"unknown preset {name!r}; available: {', '.join(available)}"]
        )
    return json.loads(ref.read_text())


class _Inputs:
    """Resolved inputs of one command, from files and/or a preset."""

    def __init__(self, args):
        self.analysis = {}
        self.spec = None
        self.data = None
        self.model = None
        self.noise = None
        preset = getattr(args, "preset", None)
        if preset:
            document = _load_preset(preset)
            self.analysis = document.get("analysis", {})
            self.spec = fileio.spec_from_dict(document, source=f"preset {preset}")
            self.data = simulate(self.spec)
            self.model = self.spec.model
            self.noise = NoiseModel.from_sd(
                [self.spec.error_sd[v] for v in self.model.variable_names]
            )
        if getattr(args, "data", None):
            self.data = fileio.read_data_csv(args.data, getattr(args, "truth", None))
        elif getattr(args, "truth", None) and self.data is not None:
            truth = fileio.read_data_csv(args.truth)
            self.data = DataSet(
                self.data.measurements, self.data.variable_names, truth.measurements
            )
        if getattr(args, "model", None):
            self.model = fileio.read_model_csv(args.model)
        if getattr(args, "noise", None):
            if self.data is None:
                raise SpecValidationError(["--noise needs --data to size the matrix"])
            self.noise = fileio.read_noise_csv(args.noise, self.data.n_variables)

    def require(self, **named):
        missing = [flag for flag, value in named.items() if value is None]
        if missing:
            raise SpecValidationError(
                [f"missing input: provide --{m.replace('_', '-')} or --preset" for m in missing]
            )


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if bool(args.spec) == bool(args.preset):
        raise SpecValidationError(["pass exactly one of --spec or --preset"])
    if args.preset:
        document = _load_preset(args.preset)
        spec = fileio.spec_from_dict(document, source=f"preset {args.preset}")
    else:
        spec = fileio.read_sim_spec(args.spec)
    data = simulate(spec)
    fileio.write_data_csv(args.out, data.variable_names, data.measurements)
    if args.truth:
        fileio.write_data_csv(args.truth, data.variable_names, data.true_values)
    print(
        f"simulated {data.n_variables} variables x {data.n_samples} samples "
        f"(seed {spec.seed}) -> {args.out}"
    )
    return EXIT_OK


# ----------------------------------------------------------------------------
# reconcile
# ----------------------------------------------------------------------------


def _print_rmse_table(rows):
    """rows: (variable, status or None, rmse_measured or None, rmse_reconciled)."""
    has_status = any(r[1] is not None for r in rows)
    header = ["variable"] + (["status"] if has_status else []) + [
        "rmse_measured",
        "rmse_reconciled",
    ]
    table = []
    for name, status, before, after in rows:
        entry = [name]
        if has_status:
            entry.append(status or "")
        entry.append("-" if before is None else _fmt(before))
        entry.append("-" if after is None else _fmt(after))
        table.append(entry)
    widths = [max(len(h), *(len(r[i]) for r in table)) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in table:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def cmd_reconcile(args) -> int:
    inputs = _Inputs(args)
    inputs.require(data=inputs.data, model=inputs.model, noise=inputs.noise)
    data, model, noise = inputs.data, inputs.model, inputs.noise
    measured = args.measured or inputs.analysis.get("measured")

    if measured is None:
        aligned = (
            data
            if data.variable_names == model.variable_names
            else data.select(model.variable_names)
        )
        reconciled = reconcile_full(model, noise, aligned)
        residual = float(np.abs(model.matrix @ reconciled).max())
        print(f"max constraint residual: {_fmt(residual)}")
        if aligned.true_values is not None:
            before = rmse_report(aligned.measurements, aligned.true_values)
            after = rmse_report(reconciled, aligned.true_values)
            _print_rmse_table(
                [
                    (name, None, before[i], after[i])
                    for i, name in enumerate(model.variable_names)
                ]
            )
        if args.out:
            fileio.write_data_csv(args.out, model.variable_names, reconciled)
            print(f"wrote reconciled estimates -> {args.out}")
        return EXIT_OK

    measured = [v.strip() for v in measured.split(",")] if isinstance(measured, str) else list(measured)
    mask = measured_mask(model.variable_names, measured)
    measured_in_order = [v for v, m in zip(model.variable_names, mask) if m]
    sub = data.select(measured_in_order)
    sub_noise = noise.select(model.column_indices(measured_in_order))
    partial = reconcile_partial(model, sub_noise, sub, mask)
    report = partial.report

    residual = (
        float(np.abs(report.reduced_model.matrix @ partial.reconciled_measured).max())
        if report.reduced_model.n_constraints
        else 0.0
    )
    print(f"reduced constraints: {report.reduced_model.n_constraints}")
    print(f"max constraint residual: {_fmt(residual)}")

    rows = []
    meas_index = {v: i for i, v in enumerate(measured_in_order)}
    truth = data.true_values
    full_index = {v: i for i, v in enumerate(data.variable_names)}
    for name in model.variable_names:
        if name in meas_index:
            i = meas_index[name]
            status = "redundant" if report.measured_redundant[name] else "non-redundant"
            before = after = None
            if truth is not None:
                before = float(
                    rmse_report(sub.measurements[i : i + 1], sub.true_values[i : i + 1])[0]
                )
                after = float(
                    rmse_report(
                        partial.reconciled_measured[i : i + 1], sub.true_values[i : i + 1]
                    )[0]
                )
            rows.append((name, status, before, after))
        else:
            observable = report.unmeasured_observable[name]
            status = "observable" if observable else "unobservable"
            after = None
            if observable and truth is not None:
                estimate = partial.unmeasured_estimates[name]
                after = float(
                    rmse_report(estimate[None, :], truth[full_index[name]][None, :])[0]
                )
            rows.append((name, status, None, after))
    _print_rmse_table(rows)

    if args.out:
        names_out = measured_in_order + [
            v for v in model.variable_names if v in partial.unmeasured_estimates
        ]
        stack = [partial.reconciled_measured] + [
            partial.unmeasured_estimates[v][None, :]
            for v in model.variable_names
            if v in partial.unmeasured_estimates
        ]
        fileio.write_data_csv(args.out, names_out, np.vstack(stack))
        print(f"wrote reconciled estimates -> {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# identify
# ----------------------------------------------------------------------------


def _truth_model(args, inputs):
    if getattr(args, "truth_model", None):
        return fileio.read_model_csv(args.truth_model)
    if args.preset and inputs.model is not None:
        return inputs.model
    return None


def _print_quality(result, truth_model, dependents):
    alpha = alpha_metric(result.model, truth_model)
    angle = subspace_angle(result.model, truth_model)
    print(f"alpha vs truth: {_fmt(alpha)}")
    print(f"subspace angle (deg): {_fmt(angle)}")
    if result.model.n_constraints == truth_model.n_constraints:
        comparison = regression_compare(result.model, truth_model, dependents)
        print(f"regression max deviation: {_fmt(comparison.max_abs_difference)}")


def cmd_identify(args) -> int:
    inputs = _Inputs(args)
    analysis = inputs.analysis
    mode = args.mode
    if mode is None and analysis.get("command") == "identify":
        mode = analysis.get("mode")
    if not mode:
        raise SpecValidationError(["--mode pca|ipca is required (or use a preset)"])
    inputs.require(data=inputs.data)
    data = inputs.data

    measured = args.measured or analysis.get("measured")
    if measured:
        measured = (
            [v.strip() for v in measured.split(",")]
            if isinstance(measured, str)
            else list(measured)
        )
        original_names = list(data.variable_names)
        keep = [v for v in original_names if v in set(measured)]
        data = data.select(keep)
        if inputs.noise is not None and inputs.noise.n_variables == len(original_names):
            inputs.noise = inputs.noise.select([original_names.index(v) for v in keep])

    order = args.order if args.order is not None else analysis.get("order")
    structure = _STRUCTURES[args.structure or analysis.get("structure") or "diagonal"]

    known = None
    if args.known:
        known = fileio.read_model_csv(args.known)
    elif "known_rows" in analysis and inputs.model is not None:
        rows = analysis["known_rows"]
        known = ConstraintModel(
            inputs.model.matrix[rows], inputs.model.variable_names
        )

    projection_zeros = known.n_constraints if known is not None else 0

    if mode == "pca":
        if inputs.noise is None:
            raise SpecValidationError(["pca mode needs --noise (or a preset with one)"])
        if known is not None:
            result = identify_with_known(data, known, noise=inputs.noise, order_total=order)
        else:
            result = pca_identify(data, inputs.noise, order=order)
    elif mode == "ipca":
        if order is None:
            raise SpecValidationError(["ipca mode needs --order"])
        config = IpcaConfig(assumed_order=int(order), covariance_structure=structure)
        if known is not None:
            result = identify_with_known(data, known, config=config)
        else:
            result, _ = ipca(data, config)
    else:
        raise SpecValidationError([f"unknown mode {mode!r}"])

    spectrum = result.singular_values
    if projection_zeros:
        live = spectrum[: len(spectrum) - projection_zeros]
        print(f"singular values: {_fmt_list(live)}")
        print(f"projection zeros: {projection_zeros}")
        detected = projection_zeros + detect_order(live)
    else:
        print(f"singular values: {_fmt_list(spectrum)}")
        detected = detect_order(spectrum)
    print(f"detected order: {detected}")
    print(f"converged: {'yes' if result.converged else 'no'} ({result.iterations} iterations)")
    if mode == "ipca":
        print(f"estimated noise sd: {_fmt_list(result.noise.sd)}")
    residual = result.max_constraint_residual()
    print(f"max constraint residual: {_fmt(residual)}")

    truth_model = _truth_model(args, inputs)
    if truth_model is not None and truth_model.variable_names == result.model.variable_names:
        dependents = (
            [v.strip() for v in args.dependents.split(",")]
            if args.dependents
            else list(truth_model.variable_names[-truth_model.n_constraints :])
        )
        _print_quality(result, truth_model, dependents)
    if data.true_values is not None:
        after = rmse_report(result.reconciled, data.true_values)
        before = rmse_report(data.measurements, data.true_values)
        _print_rmse_table(
            [
                (name, None, before[i], after[i])
                for i, name in enumerate(data.variable_names)
            ]
        )

    if args.out_model:
        fileio.write_model_csv(args.out_model, result.model)
        print(f"wrote estimated model -> {args.out_model}")
    if args.out_recon:
        fileio.write_data_csv(args.out_recon, data.variable_names, result.reconciled)
        print(f"wrote reconciled estimates -> {args.out_recon}")
    if args.out_noise:
        fileio.write_noise_csv(args.out_noise, result.noise, data.variable_names)
        print(f"wrote estimated noise -> {args.out_noise}")

    return EXIT_OK if result.converged else EXIT_NOCONVERGENCE


# ----------------------------------------------------------------------------
# scan
# ----------------------------------------------------------------------------


def cmd_scan(args) -> int:
    inputs = _Inputs(args)
    analysis = inputs.analysis
    inputs.require(data=inputs.data)
    m_min = args.m_min if args.m_min is not None else analysis.get("m_min")
    m_max = args.m_max if args.m_max is not None else analysis.get("m_max")
    if m_min is None or m_max is None:
        raise SpecValidationError(["--m-min and --m-max are required (or use a preset)"])
    structure = _STRUCTURES[args.structure or analysis.get("structure") or "diagonal"]
    template = IpcaConfig(assumed_order=int(m_min), covariance_structure=structure)
    truth_model = _truth_model(args, inputs)

    report = order_scan(
        inputs.data,
        template,
        range(int(m_min), int(m_max) + 1),
        truth_model=truth_model,
    )
    for entry in report.entries:
        if not entry.identifiable:
            print(f"order {entry.order}: NOT IDENTIFIABLE for this structure")
            continue
        verdict = "CONSISTENT" if entry.consistent else "INCONSISTENT"
        if entry.degenerate:
            verdict = "DEGENERATE SPECTRUM"
        line = (
            f"order {entry.order}: spectrum [{_fmt_list(entry.spectrum)}] | "
            f"converged {'yes' if entry.converged else 'no'} "
            f"({entry.iterations} it) | unity {entry.unity_count} | {verdict}"
        )
        if entry.alpha is not None:
            line += f" | alpha {_fmt(entry.alpha)}"
        print(line)
        if entry.rmse is not None:
            pairs = ", ".join(
                f"{name} {_fmt(v)}"
                for name, v in zip(inputs.data.variable_names, entry.rmse)
            )
            print(f"  rmse: {pairs}")
    print(
        "estimated order: "
        + (str(report.estimated_order) if report.estimated_order else "undetermined")
    )
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcadr",
        description="Data reconciliation and PCA/IPCA model identification "
        "for linear steady-state processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic steady-state data")
    p_sim.add_argument("--spec", help="simulation spec JSON file")
    p_sim.add_argument("--preset", help="shipped preset name (example1..example7)")
    p_sim.add_argument("--out", required=True, help="measurements CSV to write")
    p_sim.add_argument("--truth", help="true-values CSV to write")
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconcile", help="reconcile data against a known model")
    p_rec.add_argument("--preset", help="shipped preset name")
    p_rec.add_argument("--data", help="measurements CSV")
    p_rec.add_argument("--model", help="constraint model CSV")
    p_rec.add_argument("--noise", help="noise CSV (sd column or full matrix)")
    p_rec.add_argument("--measured", help="comma-separated measured variable names")
    p_rec.add_argument("--truth", help="true-values CSV for RMSE scoring")
    p_rec.add_argument("--out", help="reconciled CSV to write")
    p_rec.set_defaults(func=cmd_reconcile)

    p_id = sub.add_parser("identify", help="identify a constraint model from data")
    p_id.add_argument("--preset", help="shipped preset name")
    p_id.add_argument("--data", help="measurements CSV")
    p_id.add_argument("--mode", choices=["pca", "ipca"])
    p_id.add_argument("--noise", help="noise CSV (pca mode)")
    p_id.add_argument("--known", help="CSV of constraints known a priori")
    p_id.add_argument("--order", type=int, help="model order (required for ipca)")
    p_id.add_argument("--structure", choices=sorted(_STRUCTURES))
    p_id.add_argument("--measured", help="restrict to these variables first")
    p_id.add_argument("--truth", help="true-values CSV for RMSE scoring")
    p_id.add_argument("--truth-model", help="true model CSV for quality metrics")
    p_id.add_argument("--dependents", help="dependent variables for the regression check")
    p_id.add_argument("--out-model", help="estimated model CSV to write")
    p_id.add_argument("--out-recon", help="reconciled CSV to write")
    p_id.add_argument("--out-noise", help="estimated noise CSV to write")
    p_id.set_defaults(func=cmd_identify)

    p_scan = sub.add_parser("scan", help="fit a range of model orders and compare")
    p_scan.add_argument("--preset", help="shipped preset name")
    p_scan.add_argument("--data", help="measurements CSV")
    p_scan.add_argument("--m-min", type=int)
    p_scan.add_argument("--m-max", type=int)
    p_scan.add_argument("--structure", choices=sorted(_STRUCTURES))
    p_scan.add_argument("--truth", help="true-values CSV")
    p_scan.add_argument("--truth-model", help="true model CSV for alpha values")
    p_scan.set_defaults(func=cmd_scan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OrderConflict as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONVERGENCE
    except PcadrError as exc:
        if type(exc).__name__ in _NUMERICAL_ERRORS:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
