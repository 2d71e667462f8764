"""
Single-shooting Newton solver for the periodic steady state.

Driven circuits solve ``x0 - x_T(x0) = 0`` with Jacobian ``I - Phi_T``.
Free-running oscillators add the period to the unknowns and close the
system with a phase condition on one node voltage, giving the bordered
Jacobian ``[[I - Phi_T, Psi_T], [alpha^T, 0]]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DegenerateOscillation, MaxIterationsExceeded, SingularJacobian,
                     UnknownNode, ValidationError)
from .mna import solve_dc, system_for
from .netlist import GROUND, PSS_DEFAULTS, AnalysisCard, Circuit, validate_pss_params
from .sensitivity import Monodromy, monodromy
from .transient import Waveform, tran_init, tran_pss

log = logging.getLogger(__name__)

DEGENERATE_AMPLITUDE = 1e-9  # volts
_COND_LIMIT = 1e15


@dataclass(frozen=True)
class PssOptions:
    max_itr: int = PSS_DEFAULTS["MaxItr"]
    eps_max: float = PSS_DEFAULTS["EpsMax"]
    steps: int = PSS_DEFAULTS["StepsPerPeriod"]
    phase_node: str | None = None
    startup_kick: float = 1e-3  # volts added to node rows of x_DC before TranInit

    @classmethod
    def from_card(cls, card: AnalysisCard | None, **overrides) -> "PssOptions":
        kw = {}
        if card is not None:
            p = card.params
            for src, dst in (("MaxItr", "max_itr"), ("EpsMax", "eps_max"),
                             ("StepsPerPeriod", "steps"), ("PhaseNode", "phase_node")):
                if src in p:
                    kw[dst] = p[src]
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def validate(self) -> None:
        validate_pss_params({"MaxItr": self.max_itr, "EpsMax": self.eps_max,
                             "StepsPerPeriod": self.steps})


@dataclass
class ShootingState:
    x0: np.ndarray
    T0: float
    l: int
    residual: float
    history: list[tuple[int, float, float]] = field(default_factory=list)


@dataclass
class PssResult:
    pss_waveform: Waveform
    T0: float
    converged: bool
    iterations: int
    history: list[tuple[int, float, float]]
    monodromy: Monodromy | None
    iterates: list[Waveform]
    init_waveform: Waveform | None = None
    x_ref: np.ndarray | None = None
    phase_row: int | None = None
    autonomous: bool = False

    @property
    def f0(self) -> float:
        return 1.0 / self.T0

    @property
    def residual(self) -> float:
        return self.history[-1][1]

    @property
    def x0(self) -> np.ndarray:
        return self.pss_waveform.samples[0]


def _as_options(opts) -> PssOptions:
    if isinstance(opts, PssOptions):
        return opts
    if isinstance(opts, AnalysisCard) or opts is None:
        return PssOptions.from_card(opts)
    raise TypeError(f"expected PssOptions or AnalysisCard, got {type(opts).__name__}")


def phase_condition(circuit: Circuit, alpha_node: str, x0, x_ref):
    """Phase-row residual and gradient for the bordered Newton system.

    Returns ``(alpha^T (x0 - x_ref), row)`` where ``row`` has length n+1 and
    a zero in the period column.
    """
    nodemap = system_for(circuit).nodemap
    if alpha_node == GROUND or alpha_node not in nodemap.node_rows:
        raise UnknownNode(f"phase node {alpha_node!r} is not a non-ground node")
    k = nodemap.node_rows[alpha_node]
    row = np.zeros(nodemap.n + 1)
    row[k] = 1.0
    return float(x0[k] - x_ref[k]), row


def _solve_newton(J, F):
    if not np.all(np.isfinite(J)):
        raise SingularJacobian("non-finite shooting Jacobian")
    try:
        cond = np.linalg.cond(J)
        delta = np.linalg.solve(J, F)
    except np.linalg.LinAlgError:
        raise SingularJacobian("shooting Jacobian is singular") from None
    if not cond < _COND_LIMIT or not np.all(np.isfinite(delta)):
        raise SingularJacobian(f"shooting Jacobian is singular (cond={cond:.3g})")
    return delta


# ----------------------------------------------------------------------------
# driven

def shoot_driven(circuit: Circuit, T0: float, x_guess, opts=None, t0: float = 0.0) -> PssResult:
    """Periodic steady state of a circuit driven with period ``T0``."""
    opts = _as_options(opts)
    opts.validate()
    if not T0 > 0:
        raise ValidationError(f"Tper must be > 0 (got {T0:g})")
    if circuit.is_autonomous:
        raise ValidationError("driven shooting needs a time-periodic source")
    x0 = np.array(x_guess, dtype=float)
    return _newton_driven(circuit, x0, T0, t0, opts, opts.max_itr, opts.eps_max)


def _newton_driven(circuit, x0, T0, t0, opts, max_updates, eps_max, history=None,
                   iterates=None, raise_on_limit=True):
    n = x0.size
    history = [] if history is None else history
    iterates = [] if iterates is None else iterates
    l0 = history[-1][0] + 1 if history else 0
    path = tran_pss(circuit, t0, T0, x0, opts.steps)
    res = float(np.linalg.norm(path.endpoint - x0))
    history.append((l0, res, T0))
    iterates.append(path)
    updates = 0
    while res > eps_max and updates < max_updates:
        mono = monodromy(circuit, path)
        delta = _solve_newton(np.eye(n) - mono.Phi_T, x0 - path.endpoint)
        x0 = x0 - delta
        path = tran_pss(circuit, t0, T0, x0, opts.steps)
        res = float(np.linalg.norm(path.endpoint - x0))
        updates += 1
        history.append((l0 + updates, res, T0))
        iterates.append(path)
        log.debug("driven shooting l=%d residual=%.3e", l0 + updates, res)
    converged = res <= eps_max
    result = PssResult(path, T0, converged, len(history) - 1, history,
                       monodromy(circuit, path), iterates)
    if not converged and raise_on_limit:
        raise MaxIterationsExceeded(
            f"no convergence after {updates} Newton updates (residual {res:.3e})", result)
    return result


# ----------------------------------------------------------------------------
# autonomous

def default_phase_node(circuit: Circuit) -> str:
    return next(n for n in circuit.nodes if n != GROUND)


def shoot_autonomous(circuit: Circuit, Tper: float, Tstab: float, opts=None) -> PssResult:
    """Oscillator steady state with unknown period.

    DC operating point, stabilisation transient over ``[0, Tstab]`` and a
    Newton loop on the (n+1)-dimensional bordered system.
    """
    opts = _as_options(opts)
    validate_pss_params({"Tper": Tper, "Tstab": Tstab, "MaxItr": opts.max_itr,
                         "EpsMax": opts.eps_max, "StepsPerPeriod": opts.steps})
    if not circuit.is_autonomous:
        raise ValidationError("autonomous shooting requires a circuit without time-dependent sources")
    phase_node = opts.phase_node or default_phase_node(circuit)
    system = system_for(circuit)
    if phase_node not in system.nodemap.node_rows:
        raise UnknownNode(f"phase node {phase_node!r} is not a non-ground node")
    k = system.nodemap.node_rows[phase_node]

    x_dc = solve_dc(circuit)
    if not np.all(np.isfinite(x_dc)):
        raise ValidationError("DC solution is not a valid number")

    x_start = x_dc.copy()
    x_start[:system.node_count] += opts.startup_kick
    init = tran_init(circuit, 0.0, Tstab, x_start, Tper / opts.steps)

    tail = init.samples[init.times >= Tstab - Tper - 0.5 * init.dt, k]
    amplitude = 0.5 * (tail.max() - tail.min())
    if amplitude < DEGENERATE_AMPLITUDE:
        raise DegenerateOscillation(
            f"oscillation amplitude {amplitude:.3g} V at node {phase_node} after Tstab; "
            "the circuit settles to its DC equilibrium")

    result = _newton_autonomous(circuit, init.endpoint.copy(), Tper, Tstab, x_dc, k, opts,
                                opts.max_itr, opts.eps_max, raise_on_limit=False)
    result.init_waveform = init
    if not result.converged:
        raise MaxIterationsExceeded(
            f"no convergence after {result.iterations} Newton updates "
            f"(residual {result.residual:.3e})", result)
    return result


def _augmented_residual(x0, xT, x_ref, k):
    F = np.append(x0 - xT, x0[k] - x_ref[k])
    return F, float(np.linalg.norm(F))


def _newton_autonomous(circuit, x0, T0, t0, x_ref, k, opts, max_updates, eps_max,
                       history=None, iterates=None, raise_on_limit=True):
    n = x0.size
    history = [] if history is None else history
    iterates = [] if iterates is None else iterates
    l0 = history[-1][0] + 1 if history else 0
    path = tran_pss(circuit, t0, T0, x0, opts.steps)
    F, res = _augmented_residual(x0, path.endpoint, x_ref, k)
    history.append((l0, res, T0))
    iterates.append(path)
    alpha = np.zeros(n + 1)
    alpha[k] = 1.0
    updates = 0
    while res > eps_max and updates < max_updates:
        mono = monodromy(circuit, path)
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = np.eye(n) - mono.Phi_T
        J[:n, n] = mono.Psi_T
        J[n] = alpha
        delta = _solve_newton(J, F)
        lam = 1.0
        # guard the period update: keep T0 positive and within +-50 % per step
        while T0 - lam * delta[n] <= 0 or abs(lam * delta[n]) > 0.5 * T0:
            lam *= 0.5
        x0 = x0 - lam * delta[:n]
        T0 = T0 - lam * delta[n]
        path = tran_pss(circuit, t0, T0, x0, opts.steps)
        F, res = _augmented_residual(x0, path.endpoint, x_ref, k)
        updates += 1
        history.append((l0 + updates, res, T0))
        iterates.append(path)
        log.debug("autonomous shooting l=%d residual=%.3e T0=%.9g", l0 + updates, res, T0)
    converged = res <= eps_max
    result = PssResult(path, T0, converged, len(history) - 1, history,
                       monodromy(circuit, path), iterates, x_ref=x_ref, phase_row=k,
                       autonomous=True)
    if not converged and raise_on_limit:
        raise MaxIterationsExceeded(
            f"no convergence after {updates} Newton updates (residual {res:.3e})", result)
    return result


def refine(circuit: Circuit, result: PssResult, updates: int = 2, opts=None) -> PssResult:
    """Continue Newton past convergence to obtain a reference solution.

    Runs exactly ``updates`` extra corrections from the converged iterate and
    returns the iterate with the smallest residual. Used as the "true" steady
    state when measuring the convergence history of ``result``.
    """
    opts = _as_options(opts) if opts is not None else PssOptions(steps=result.pss_waveform.steps)
    opts = replace(opts, steps=result.pss_waveform.steps)
    x0 = result.x0.copy()
    t0 = result.pss_waveform.t0
    if result.autonomous:
        run = _newton_autonomous(circuit, x0, result.T0, t0, result.x_ref, result.phase_row,
                                 opts, updates, 0.0, raise_on_limit=False)
    else:
        run = _newton_driven(circuit, x0, result.T0, t0, opts, updates, 0.0,
                             raise_on_limit=False)
    best = min(range(len(run.iterates)), key=lambda i: run.history[i][1])
    path = run.iterates[best]
    return replace(run, pss_waveform=path, T0=run.history[best][2], converged=True,
                   iterations=best, history=run.history[:best + 1],
                   iterates=run.iterates[:best + 1], monodromy=monodromy(circuit, path))
