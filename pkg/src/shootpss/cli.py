"""
Command-line driver.

``pss NETLIST [flags]`` runs the DC operating point, the stabilisation
transient and the shooting Newton loop, then writes the time-domain,
periodic and spectral datasets plus the convergence history. Command-line
flags override the ``.PSS`` card, which overrides the built-in defaults.

Exit codes:

====  ==========================================================
0     converged, all datasets written
1     netlist syntax, validation or unknown-node error
2     MaxItr reached; datasets of the partial run are written
3     numerical failure (DC, transient step, singular matrix)
4     singular shooting Jacobian
5     degenerate oscillation (circuit settles to DC)
6     file I/O error
7     any other simulator error
====  ==========================================================
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .analysis import convergence_report, dbm, spectrum
from .datasets import Dataset, DatasetKind, write_dataset
from .errors import (DatasetIOError, DegenerateOscillation, InsufficientHistory,
                     MaxIterationsExceeded, ModelEvalError, NetlistSyntaxError, NoConvergence,
                     PssError, SingularJacobian, SingularMatrix, StepNoConvergence, UnknownNode,
                     ValidationError)
from .mna import solve_dc, system_for
from .netlist import PSS_DEFAULTS, Circuit, parse_netlist, parse_value, validate_pss_params
from .shooting import PssOptions, PssResult, refine, shoot_autonomous, shoot_driven
from .transient import Waveform, tran_init

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITERATIONS = 2
EXIT_NUMERIC = 3
EXIT_SINGULAR_JACOBIAN = 4
EXIT_DEGENERATE = 5
EXIT_IO = 6
EXIT_OTHER = 7

EXIT_CODES: dict[type[PssError], int] = {
    NetlistSyntaxError: EXIT_INPUT,
    ValidationError: EXIT_INPUT,
    UnknownNode: EXIT_INPUT,
    MaxIterationsExceeded: EXIT_MAX_ITERATIONS,
    ModelEvalError: EXIT_NUMERIC,
    SingularMatrix: EXIT_NUMERIC,
    NoConvergence: EXIT_NUMERIC,
    StepNoConvergence: EXIT_NUMERIC,
    SingularJacobian: EXIT_SINGULAR_JACOBIAN,
    DegenerateOscillation: EXIT_DEGENERATE,
    DatasetIOError: EXIT_IO,
    InsufficientHistory: EXIT_OTHER,
    PssError: EXIT_OTHER,
}


def exit_code(exc: BaseException) -> int:
    """Exit code for ``exc``, chosen by its most specific mapped class."""
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return EXIT_IO if isinstance(exc, OSError) else EXIT_OTHER


def _number(text: str) -> float:
    try:
        return parse_value(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number {text!r}") from None


def _integer(text: str) -> int:
    value = _number(text)
    if value != int(value):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    return int(value)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pss", description="Periodic steady-state analysis by shooting.")
    p.add_argument("netlist")
    p.add_argument("--tper", type=_number, help="period estimate (driven: drive period)")
    p.add_argument("--tstab", type=_number, help="stabilisation transient length")
    p.add_argument("--maxitr", type=_integer, help=f"Newton update limit (default {PSS_DEFAULTS['MaxItr']})")
    p.add_argument("--epsmax", type=_number, help=f"residual tolerance (default {PSS_DEFAULTS['EpsMax']:g})")
    p.add_argument("--steps", type=_integer,
                   help=f"time steps per period (default {PSS_DEFAULTS['StepsPerPeriod']})")
    p.add_argument("--phase-node", help="node anchoring the oscillator phase")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed-transient-only", action="store_true",
                   help="stop after the stabilisation transient and write .Vt/.It")
    p.add_argument("--report", action="store_true", help="print the convergence report")
    return p


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def resolve_parameters(circuit: Circuit, args) -> dict:
    """Merge flags, the ``.PSS`` card and defaults, then validate.

    Every rule is checked here, before any numerical work starts.
    """
    card = circuit.card("PSS")
    params = dict(PSS_DEFAULTS)
    if card is not None:
        params.update(card.params)
    for key, value in (("Tper", args.tper), ("Tstab", args.tstab), ("MaxItr", args.maxitr),
                       ("EpsMax", args.epsmax), ("StepsPerPeriod", args.steps),
                       ("PhaseNode", args.phase_node)):
        if value is not None:
            params[key] = value
    if "Tper" not in params:
        if circuit.is_autonomous:
            raise ValidationError("Tper is required for a free-running circuit (--tper or .PSS TPER=)")
        params["Tper"] = circuit.drive_period
    if "Tstab" not in params:
        params["Tstab"] = 10.0 * params["Tper"]
    validate_pss_params(params)
    if not circuit.is_autonomous:
        ratio = params["Tper"] / circuit.drive_period
        if not abs(ratio - round(ratio)) <= 1e-9 * ratio or round(ratio) < 1:
            raise ValidationError(f"Tper={params['Tper']:g} is not a multiple of the drive period "
                                  f"{circuit.drive_period:g}")
    if "PhaseNode" in params:
        node = params["PhaseNode"]
        if node == "0" or node not in circuit.nodes:
            raise UnknownNode(f"phase node {node!r} is not a non-ground node")
    return params


# ----------------------------------------------------------------------------
# datasets

def _split(labels):
    volts = [i for i, s in enumerate(labels) if s.startswith("V(")]
    amps = [i for i, s in enumerate(labels) if s.startswith("I(")]
    return (("V", volts), ("I", amps))


def time_datasets(kind: DatasetKind, wave: Waveform, meta: dict) -> list[Dataset]:
    out = []
    for quantity, rows in _split(wave.labels):
        if not rows:
            continue
        cols = {"t": wave.times}
        cols.update({wave.labels[i]: wave.samples[:, i] for i in rows})
        out.append(Dataset(kind, cols, meta, quantity))
    return out


def spectrum_datasets(wave: Waveform, f0: float, meta: dict) -> list[Dataset]:
    spec = spectrum(wave, f0)
    mag = spec.magnitude
    out = []
    for quantity, rows in _split(wave.labels):
        if not rows:
            continue
        cols = {"f": spec.f}
        for i in rows:
            cols[f"|{wave.labels[i]}|"] = mag[:, i]
            if quantity == "V":
                cols[f"dBm({wave.labels[i]})"] = dbm(mag[:, i])
        out.append(Dataset(DatasetKind.PSS_SPECTRUM, cols, meta, quantity))
    return out


def convergence_dataset(result: PssResult, reference: PssResult | None, Tstab: float,
                        meta: dict) -> tuple[Dataset, object]:
    l = np.array([h[0] for h in result.history], dtype=float)
    res = np.array([h[1] for h in result.history])
    report = None
    if reference is not None:
        report = convergence_report(result, reference, Tstab)
        eps = np.array(report.eps)
        delta_f = np.array(report.delta_f)
    else:
        eps = np.full(l.shape, math.nan)
        delta_f = np.full(l.shape, math.nan)
    cols = {"l": l, "eps": eps, "delta_f": delta_f, "residual": res}
    return Dataset(DatasetKind.CONVERGENCE, cols, meta), report


# ----------------------------------------------------------------------------
# driver

def _simulate(circuit: Circuit, params: dict, seed_only: bool):
    opts = PssOptions(max_itr=params["MaxItr"], eps_max=params["EpsMax"],
                      steps=params["StepsPerPeriod"], phase_node=params.get("PhaseNode"))
    Tper, Tstab = params["Tper"], params["Tstab"]
    if circuit.is_autonomous:
        if seed_only:
            x = solve_dc(circuit)
            x[:system_for(circuit).node_count] += opts.startup_kick
            return tran_init(circuit, 0.0, Tstab, x, Tper / opts.steps), None
        result = shoot_autonomous(circuit, Tper, Tstab, opts)
        return result.init_waveform, result
    init = tran_init(circuit, 0.0, Tstab, solve_dc(circuit), Tper / opts.steps)
    if seed_only:
        return init, None
    try:
        result = shoot_driven(circuit, Tper, init.endpoint, opts, t0=init.times[-1])
    except MaxIterationsExceeded as exc:
        exc.result.init_waveform = init
        raise
    result.init_waveform = init
    return init, result


def _write_all(circuit, params, stem, out_dir, init, result, converged, report_flag, stdout):
    base = {"tool": f"shootpss {__version__}", "title": circuit.title}
    written = []
    for ds in time_datasets(DatasetKind.TRANSIENT, init, base):
        written.append(write_dataset(ds, out_dir, stem))
    if result is None:
        return written
    meta = dict(base, f0=result.f0, iterations=result.iterations, residual=result.residual,
                converged=converged)
    for ds in time_datasets(DatasetKind.PSS_TIME, result.pss_waveform, meta):
        written.append(write_dataset(ds, out_dir, stem))
    for ds in spectrum_datasets(result.pss_waveform, result.f0, meta):
        written.append(write_dataset(ds, out_dir, stem))
    reference = refine(circuit, result) if converged else None
    conv, report = convergence_dataset(result, reference, params["Tstab"], meta)
    written.append(write_dataset(conv, out_dir, stem))
    if report_flag:
        print(f"f0           = {result.f0:.12g} Hz", file=stdout)
        print(f"iterations   = {result.iterations}", file=stdout)
        print(f"residual     = {result.residual:.3e}", file=stdout)
        if report is not None:
            print(f"K_STAB       = {report.K_stab}", file=stdout)
            print(f"delta_f_init = {report.delta_f_init:.3e}", file=stdout)
            print(f"l0           = {report.l0}", file=stdout)
            print(f"sigma_hat    = {_opt(report.sigma_hat)}", file=stdout)
            print(f"muL_hat      = {_opt(report.muL_hat)}", file=stdout)
        mults = np.sort(np.abs(result.monodromy.multipliers))[::-1]
        print("multipliers  = " + " ".join(f"{m:.6g}" for m in mults[:4]), file=stdout)
    return written


def _opt(v):
    return "n/a" if v is None else f"{v:.3f}"


def run(argv=None, stdout=None, stderr=None) -> int:
    """Execute the command line ``argv`` and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    parser.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"pss: {exc}", file=stderr)
        return EXIT_INPUT

    path = args.netlist
    stem = os.path.splitext(os.path.basename(path))[0]
    try:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise DatasetIOError(f"cannot read netlist: {exc}") from exc
        circuit = parse_netlist(text)
        params = resolve_parameters(circuit, args)
        try:
            init, result = _simulate(circuit, params, args.seed_transient_only)
        except MaxIterationsExceeded as exc:
            partial = exc.result
            if partial is not None:
                init = partial.init_waveform
                _write_all(circuit, params, stem, args.out, init, partial, False,
                           args.report, stdout)
            raise
        files = _write_all(circuit, params, stem, args.out, init, result, True,
                           args.report, stdout)
    except PssError as exc:
        print(f"{path}:{exc}" if getattr(exc, "line", 0) else f"{path}: {exc}", file=stderr)
        return exit_code(exc)
    for f in files:
        print(f"wrote {f}", file=stdout)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
