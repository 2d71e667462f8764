"""
Fixed-step linear-multistep integration of the MNA equations.

Runs use the trapezoidal rule (or backward Euler if requested). The
first step either takes one backward-Euler step, which tolerates an
inconsistent initial state, or seeds the charge derivative from the
circuit equation itself. Stabilisation transients use the former and
shooting periods the latter. No state survives between calls: two calls
with equal arguments produce bit-identical waveforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import ModelEvalError, SingularMatrix, StepNoConvergence
from .mna import MnaEvaluation, MnaSystem, pnjlim, system_for
from .netlist import Circuit

MAX_STEP_ITERATIONS = 50
STEP_RTOL = 1e-12


class Method(str, Enum):
    BACKWARD_EULER = "BackwardEuler"
    TRAPEZOIDAL = "Trapezoidal"


class Start(str, Enum):
    """How the first step obtains its derivative history."""

    BACKWARD_EULER = "be"  # one backward-Euler step, robust to inconsistent x0
    CONSISTENT = "consistent"  # qdot0 = -(i(x0) + s(t0)) on reactive rows


@dataclass(frozen=True)
class LmsConfig:
    method: Method
    dt: float

    @property
    def a0(self) -> float:
        return (1.0 if self.method == Method.BACKWARD_EULER else 2.0) / self.dt


@dataclass(frozen=True)
class LmsHistory:
    """Past-step terms: the charge and its derivative at the previous point."""

    q: np.ndarray
    qdot: np.ndarray


@dataclass
class Waveform:
    t0: float
    dt: float
    samples: np.ndarray  # (m + 1, n)
    labels: tuple[str, ...]
    method: Method = Method.TRAPEZOIDAL
    start: Start = Start.BACKWARD_EULER

    @property
    def steps(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.shape[0])

    @property
    def endpoint(self) -> np.ndarray:
        return self.samples[-1]

    def column(self, label: str) -> np.ndarray:
        return self.samples[:, self.labels.index(label)]


def companion_assemble(ev: MnaEvaluation, config: LmsConfig, history: LmsHistory):
    """Companion system ``A x = rhs`` of one LMS step, linearised at ``ev.x``.

    ``A = a0*C + G``; ``rhs`` collects the history terms, the sources and the
    nonlinear correction ``G x - i(x)``, so that solving for ``x`` is one
    Newton update of the discretised circuit equation.
    """
    a0 = config.a0
    A = a0 * ev.C + ev.G
    hist = a0 * history.q
    if config.method == Method.TRAPEZOIDAL:
        hist = hist + history.qdot
    residual = a0 * ev.q - hist + ev.i + ev.s
    rhs = A @ ev.x - residual
    if not np.all(np.isfinite(A)):
        raise SingularMatrix("non-finite companion matrix")
    return A, rhs


def recover_capacitance(A: np.ndarray, G: np.ndarray, a0: float) -> np.ndarray:
    """Extract C from a companion matrix and the resistive Jacobian."""
    return (A - G) / a0


def _step(system: MnaSystem, x_guess, t, config, history, lu=None):
    """Solve one implicit step; returns the new state and its charge vector.

    Charges are linear in this device set (q = C x), which the caller relies on.
    """
    if lu is not None:
        # linear circuit: a single exact solve with the pre-factored matrix
        hist = config.a0 * history.q
        if config.method == Method.TRAPEZOIDAL:
            hist = hist + history.qdot
        x = scipy.linalg.lu_solve(lu, hist - system.sources(t), check_finite=False)
        return x, system.C_lin @ x

    # same arithmetic as companion_assemble, with the constant part hoisted
    a0 = config.a0
    hist = a0 * history.q
    if config.method == Method.TRAPEZOIDAL:
        hist = hist + history.qdot
    A_lin = a0 * system.C_lin + system.G_lin
    b_const = system.sources(t) - hist
    P = system.P
    x = x_guess.copy()
    diodes = bool(system.dio_names)
    vj = system.junction_voltages(x) if diodes else None
    for _ in range(MAX_STEP_ITERATIONS):
        try:
            cur, g = system._nonlinear(x, vj)
        except ModelEvalError as exc:
            raise StepNoConvergence(f"model evaluation failed: {exc}", t) from None
        A = A_lin + (P * g) @ P.T
        residual = A_lin @ x + P @ cur + b_const
        try:
            dx_vec = np.linalg.solve(A, residual)
        except np.linalg.LinAlgError:
            raise SingularMatrix(f"singular companion matrix at t={t:.6g} s") from None
        x_new = x - dx_vec
        dx = np.abs(dx_vec).max()
        if not math.isfinite(dx):
            raise StepNoConvergence("non-finite Newton update", t)
        limited = False
        if diodes:
            vj_new = system.junction_voltages(x_new)
            vj_lim = pnjlim(vj_new, vj, system.dio_nvt, system.dio_vcrit)
            limited = not np.array_equal(vj_lim, vj_new)
            vj = vj_lim
        x = x_new
        if not limited and dx <= STEP_RTOL * (1.0 + np.abs(x).max()):
            return x, system.C_lin @ x
    raise StepNoConvergence(f"step Newton failed after {MAX_STEP_ITERATIONS} iterations", t)


def consistent_qdot(system: MnaSystem, x0, t0: float) -> np.ndarray:
    """Charge derivative implied by the circuit equation at ``(x0, t0)``.

    Rows without any reactive stamp carry no charge and get zero.
    """
    try:
        ev = system.evaluate(x0, t0)
    except ModelEvalError as exc:
        raise StepNoConvergence(f"model evaluation failed: {exc}", t0) from None
    return np.where(system.reactive_rows, -(ev.i + ev.s), 0.0)


def integrate(circuit: Circuit, t0: float, dt: float, steps: int, x0,
              method: Method = Method.TRAPEZOIDAL,
              start: Start = Start.BACKWARD_EULER) -> Waveform:
    """Integrate ``steps`` uniform steps of size ``dt`` from ``x(t0) = x0``."""
    system = system_for(circuit)
    x = np.array(x0, dtype=float)
    if x.shape != (system.n,):
        raise ValueError(f"initial state has shape {x.shape}, expected ({system.n},)")
    if not dt > 0 or steps < 1:
        raise ValueError("dt must be > 0 and steps >= 1")
    samples = np.empty((steps + 1, system.n))
    samples[0] = x
    be = LmsConfig(Method.BACKWARD_EULER, dt)
    cfg = LmsConfig(method, dt)

    lu_be = lu_cfg = None
    if not system.has_nonlinear:
        try:
            lu_be = scipy.linalg.lu_factor(be.a0 * system.C_lin + system.G_lin, check_finite=True)
            lu_cfg = lu_be if method == Method.BACKWARD_EULER else \
                scipy.linalg.lu_factor(cfg.a0 * system.C_lin + system.G_lin)
        except (ValueError, scipy.linalg.LinAlgError):
            raise SingularMatrix("singular companion matrix") from None
        if np.any(np.diag(lu_be[0]) == 0) or np.any(np.diag(lu_cfg[0]) == 0):
            raise SingularMatrix("singular companion matrix")

    q = system.C_lin @ x
    x_prev = x
    if start == Start.BACKWARD_EULER or method == Method.BACKWARD_EULER:
        x, q_new = _step(system, x, t0 + dt, be, LmsHistory(q, np.zeros_like(q)), lu_be)
        qdot = be.a0 * (q_new - q)
        first = 2
        samples[1] = x
        q = q_new
    else:
        qdot = consistent_qdot(system, x, t0)
        first = 1
    for k in range(first, steps + 1):
        t = t0 + k * dt
        # linear predictor for the Newton start; the converged point does not depend on it
        guess = 2.0 * x - x_prev if k > first else x
        x_prev = x
        x, q_new = _step(system, guess, t, cfg, LmsHistory(q, qdot), lu_cfg)
        if method == Method.TRAPEZOIDAL:
            qdot = cfg.a0 * (q_new - q) - qdot
        else:
            qdot = cfg.a0 * (q_new - q)
        q = q_new
        samples[k] = x
    return Waveform(t0, dt, samples, system.nodemap.labels, method, start)


def tran_init(circuit: Circuit, t_a: float, t_b: float, x_init, dt: float,
              method: Method = Method.TRAPEZOIDAL) -> Waveform:
    """Stabilisation transient over ``[t_a, t_b]`` with step at most ``dt``."""
    if not t_b > t_a:
        raise ValueError("t_b must exceed t_a")
    steps = max(1, math.ceil((t_b - t_a) / dt * (1 - 1e-12)))
    return integrate(circuit, t_a, (t_b - t_a) / steps, steps, x_init, method)


def tran_pss(circuit: Circuit, t0: float, T0: float, x0, steps: int,
             method: Method = Method.TRAPEZOIDAL, start: Start = Start.CONSISTENT) -> Waveform:
    """One shooting period: ``steps`` uniform steps of ``T0/steps`` from ``t0``.

    The default consistent start makes the period map a plain power of the
    trapezoidal one-step map, which keeps it invariant under time shifts of
    an autonomous orbit.
    """
    if not T0 > 0:
        raise ValueError("T0 must be > 0")
    return integrate(circuit, t0, T0 / steps, steps, x0, method, start)
