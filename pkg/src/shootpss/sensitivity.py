"""
Linear-response propagation along a stored trajectory.

The monodromy matrix is obtained by pushing the identity through the
derivative of exactly the recurrence that :func:`transient.integrate`
applies (the same start rule, then trapezoidal steps on the same mesh),
so it is the Jacobian of the discrete period map rather than of the
continuous flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularMatrix
from .mna import system_for
from .netlist import Circuit
from .transient import LmsConfig, Method, Start, Waveform


@dataclass
class SystemJacobians:
    t0: float
    dt: float
    method: Method
    start: Start
    G: np.ndarray  # (m + 1, n, n)
    C: np.ndarray  # (m + 1, n, n)

    @property
    def steps(self) -> int:
        return self.G.shape[0] - 1


@dataclass
class Monodromy:
    Phi_T: np.ndarray
    Psi_T: np.ndarray

    @property
    def multipliers(self) -> np.ndarray:
        return np.linalg.eigvals(self.Phi_T)


def collect_gc(circuit: Circuit, path: Waveform) -> SystemJacobians:
    """Evaluate G(t_k) and C(t_k) at every stored sample of ``path``."""
    system = system_for(circuit)
    m1, n = path.samples.shape
    G = np.empty((m1, n, n))
    C = np.empty((m1, n, n))
    times = path.times
    for k in range(m1):
        ev = system.evaluate(path.samples[k], times[k])
        G[k] = ev.G
        C[k] = ev.C
    return SystemJacobians(path.t0, path.dt, path.method, path.start, G, C)


def integrate_phi(jacs: SystemJacobians, config: LmsConfig | None = None) -> np.ndarray:
    """Sensitivity matrix dx_T/dx_0 of the discrete period map.

    ``config`` must describe the same mesh and method that produced the
    trajectory; a mismatch raises ``ValueError``.
    """
    if config is None:
        config = LmsConfig(jacs.method, jacs.dt)
    if config.dt != jacs.dt or config.method != jacs.method:
        raise ValueError(f"mesh mismatch: jacobians on dt={jacs.dt!r} ({jacs.method.value}), "
                         f"config dt={config.dt!r} ({config.method.value})")
    n = jacs.G.shape[1]
    a0_be = 1.0 / jacs.dt
    a0 = config.a0
    X = np.eye(n)

    def factor(A, k):
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        if np.any(np.diag(lu) == 0) or not np.all(np.isfinite(lu)):
            raise SingularMatrix(f"singular linear-response matrix at step {k}")
        return lu, piv

    trap = config.method == Method.TRAPEZOIDAL
    CX_prev = jacs.C[0] @ X
    if jacs.start == Start.BACKWARD_EULER or not trap:
        lu = factor(a0_be * jacs.C[1] + jacs.G[1], 1)
        X = scipy.linalg.lu_solve(lu, a0_be * CX_prev, check_finite=False)
        CX = jacs.C[1] @ X
        Qdot = a0_be * (CX - CX_prev)
        CX_prev = CX
        first = 2
    else:
        # derivative of qdot0 = -(i(x0) + s) on reactive rows
        reactive = np.any(jacs.C[0] != 0, axis=1)
        Qdot = np.where(reactive[:, None], -jacs.G[0], 0.0)
        first = 1
    for k in range(first, jacs.steps + 1):
        lu = factor(a0 * jacs.C[k] + jacs.G[k], k)
        rhs = a0 * CX_prev + (Qdot if trap else 0.0)
        X = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        CX = jacs.C[k] @ X
        Qdot = a0 * (CX - CX_prev) - Qdot if trap else a0 * (CX - CX_prev)
        CX_prev = CX
    return X


def period_derivative(circuit: Circuit, path: Waveform) -> np.ndarray:
    """``-dx_T/dT0`` from the endpoint slope of ``path``.

    Uses the second-order backward difference over the last three mesh
    points (first-order if the path has a single step).
    """
    x = path.samples
    if path.steps >= 2:
        xdot = (3 * x[-1] - 4 * x[-2] + x[-3]) / (2 * path.dt)
    else:
        xdot = (x[-1] - x[-2]) / path.dt
    return -xdot


def monodromy(circuit: Circuit, path: Waveform) -> Monodromy:
    jacs = collect_gc(circuit, path)
    return Monodromy(integrate_phi(jacs), period_derivative(circuit, path))
