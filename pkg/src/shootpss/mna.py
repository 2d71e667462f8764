"""
Modified nodal analysis for the circuit equations

    d/dt q(x) + i(x) + s(t) = 0

with Jacobians G = di/dx and C = dq/dx. Linear elements are stamped once
into constant matrices; only the polynomial conductances and diodes are
re-evaluated per call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import ModelEvalError, NoConvergence, SingularMatrix
from .netlist import GROUND, Circuit, DeviceKind, NodeMap, node_index_map

VT = 0.025852  # thermal voltage at 300 K
_EXP_LIMIT = 700.0


@dataclass
class MnaEvaluation:
    x: np.ndarray
    t: float
    q: np.ndarray
    i: np.ndarray
    s: np.ndarray
    G: np.ndarray
    C: np.ndarray


def pnjlim(v_new, v_old, vt, vcrit):
    """SPICE junction-voltage limiting (vectorised)."""
    v_new = np.asarray(v_new, dtype=float).copy()
    v_old = np.asarray(v_old, dtype=float)
    mask = (v_new > vcrit) & (np.abs(v_new - v_old) > 2 * vt)
    if np.any(mask):
        vn, vo, nvt, vc = v_new[mask], v_old[mask], vt[mask], vcrit[mask]
        arg = 1 + (vn - vo) / nvt
        lim = np.where(vo > 0,
                       np.where(arg > 0, vo + nvt * np.log(np.maximum(arg, 1e-300)), vc),
                       nvt * np.log(vn / nvt))
        v_new[mask] = lim
    return v_new


class MnaSystem:
    """Compiled MNA description of a circuit.

    Holds the constant linear stamps plus index arrays for the nonlinear
    devices, so that :meth:`evaluate` costs a few vector operations.
    """

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.nodemap: NodeMap = node_index_map(circuit)
        n = self.n = self.nodemap.n
        # extended matrices carry ground in the last row/column, sliced off later
        G = np.zeros((n + 1, n + 1))
        C = np.zeros((n + 1, n + 1))
        s_dc = np.zeros(n + 1)
        sin_rows, sin_params = [], []
        poly, diode = [], []

        def idx(node):
            return n if node == GROUND else self.nodemap.node_rows[node]

        for dev in circuit.devices:
            a, b = (idx(t) for t in dev.terminals)
            p = dev.params
            k = dev.kind
            if k == DeviceKind.RESISTOR:
                _stamp2(G, a, b, 1.0 / p["R"])
            elif k == DeviceKind.CAPACITOR:
                _stamp2(C, a, b, p["C"])
            elif k in (DeviceKind.INDUCTOR, DeviceKind.VSOURCE_DC, DeviceKind.VSOURCE_SIN):
                br = self.nodemap.branch_rows[dev.name]
                G[a, br] += 1.0
                G[b, br] -= 1.0
                G[br, a] += 1.0
                G[br, b] -= 1.0
                if k == DeviceKind.INDUCTOR:
                    C[br, br] -= p["L"]
                elif k == DeviceKind.VSOURCE_DC:
                    s_dc[br] -= p["V"]
                else:
                    sin_rows.append(br)
                    sin_params.append((p["voff"], p["vamp"], p["freq"], p["tdelay"]))
            elif k == DeviceKind.ISOURCE_DC:
                s_dc[a] += p["I"]
                s_dc[b] -= p["I"]
            elif k == DeviceKind.POLY_CONDUCTANCE:
                poly.append((a, b, p["a0"], p["a1"], p["a2"], p["a3"]))
            elif k == DeviceKind.DIODE:
                diode.append((a, b, p["IS"], p["N"], dev.name))

        self.G_lin = G[:n, :n].copy()
        self.C_lin = C[:n, :n].copy()
        self.reactive_rows = np.any(self.C_lin != 0, axis=1)
        self.s_dc = s_dc[:n].copy()
        self.sin_rows = np.array(sin_rows, dtype=int)
        sp = np.array(sin_params, dtype=float).reshape(-1, 4)
        self.sin_voff, self.sin_vamp, self.sin_freq, self.sin_td = sp.T
        self.node_count = len(self.nodemap.node_rows)

        self.poly_a = np.array([d[0] for d in poly], dtype=int)
        self.poly_b = np.array([d[1] for d in poly], dtype=int)
        self.poly_c = np.array([d[2:] for d in poly], dtype=float).reshape(-1, 4)
        self.dio_a = np.array([d[0] for d in diode], dtype=int)
        self.dio_b = np.array([d[1] for d in diode], dtype=int)
        self.dio_is = np.array([d[2] for d in diode], dtype=float)
        self.dio_nvt = np.array([d[3] * VT for d in diode], dtype=float)
        self.dio_names = [d[4] for d in diode]
        self.dio_vcrit = self.dio_nvt * np.log(self.dio_nvt / (math.sqrt(2) * self.dio_is)) \
            if diode else np.zeros(0)
        self.nl_a = np.concatenate([self.poly_a, self.dio_a])
        self.nl_b = np.concatenate([self.poly_b, self.dio_b])
        # incidence of the nonlinear branches: V = P.T @ x, i += P @ I, G += P diag(g) P.T
        P = np.zeros((n + 1, self.nl_a.size))
        P[self.nl_a, np.arange(self.nl_a.size)] += 1.0
        P[self.nl_b, np.arange(self.nl_a.size)] -= 1.0
        self.P = P[:n].copy()
        self.P_poly = self.P[:, :len(poly)].copy()
        self.P_dio = self.P[:, len(poly):].copy()
        self.has_nonlinear = self.nl_a.size > 0

    # -- pieces --------------------------------------------------------------

    def sources(self, t: float) -> np.ndarray:
        s = self.s_dc.copy()
        if self.sin_rows.size:
            v = self.sin_voff + self.sin_vamp * np.sin(2 * np.pi * self.sin_freq * (t - self.sin_td))
            s[self.sin_rows] -= v
        return s

    def junction_voltages(self, x: np.ndarray) -> np.ndarray:
        return self.P_dio.T @ x

    def _nonlinear(self, x, junction_v=None):
        """Currents and conductances of the nonlinear two-terminal devices."""
        vp = self.P_poly.T @ x
        a0, a1, a2, a3 = self.poly_c.T
        ip = a0 + vp * (a1 + vp * (a2 + vp * a3))
        gp = a1 + vp * (2 * a2 + 3 * a3 * vp)
        if not self.dio_names:
            return ip, gp

        vd = self.P_dio.T @ x
        vl = vd if junction_v is None else junction_v
        arg = vl / self.dio_nvt
        if np.any(arg > _EXP_LIMIT):
            k = int(np.argmax(arg > _EXP_LIMIT))
            raise ModelEvalError(
                f"diode {self.dio_names[k]}: exponential overflow at V={vl[k]:.6g} V "
                f"(nodes {self._row_label(self.dio_a[k])}, {self._row_label(self.dio_b[k])})")
        e = np.exp(arg)
        gd = self.dio_is * e / self.dio_nvt
        idd = self.dio_is * (e - 1.0) + gd * (vd - vl)
        return np.concatenate([ip, idd]), np.concatenate([gp, gd])

    def _row_label(self, row):
        return "0" if row == self.n else self.nodemap.labels[row]

    # -- public --------------------------------------------------------------

    def evaluate(self, x, t: float = 0.0, junction_v=None) -> MnaEvaluation:
        """q, i, s and the analytic Jacobians at state ``x`` and time ``t``.

        ``junction_v`` linearises the diodes about limited junction voltages
        (Newton step limiting); leave it ``None`` for the exact model.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(x)):
            raise ModelEvalError("non-finite state vector")
        q = self.C_lin @ x
        i = self.G_lin @ x
        if self.has_nonlinear:
            cur, g = self._nonlinear(x, junction_v)
            i += self.P @ cur
            G = self.G_lin + (self.P * g) @ self.P.T
            if not np.all(np.isfinite(i)):
                raise ModelEvalError("non-finite device current")
        else:
            G = self.G_lin.copy()
        return MnaEvaluation(x, t, q, i, self.sources(t), G, self.C_lin.copy())

    def structural_rank_ok(self) -> bool:
        """True if the DC Jacobian pattern admits a perfect matching."""
        pattern = self.G_lin != 0
        n = self.n
        if self.has_nonlinear:
            for a, b in zip(self.nl_a, self.nl_b):
                for r in (a, b):
                    for c in (a, b):
                        if r < n and c < n:
                            pattern[r, c] = True
        if n == 0:
            return True
        match = maximum_bipartite_matching(csr_matrix(pattern.astype(np.int8)), perm_type="column")
        return bool(np.all(match >= 0))


def _stamp2(M, a, b, val):
    M[a, a] += val
    M[b, b] += val
    M[a, b] -= val
    M[b, a] -= val


_SYSTEMS: dict[int, tuple[Circuit, MnaSystem]] = {}


def system_for(circuit: Circuit) -> MnaSystem:
    """Memoised :class:`MnaSystem` for a circuit object."""
    hit = _SYSTEMS.get(id(circuit))
    if hit is not None and hit[0] is circuit:
        return hit[1]
    sys_ = MnaSystem(circuit)
    if len(_SYSTEMS) > 64:
        _SYSTEMS.clear()
    _SYSTEMS[id(circuit)] = (circuit, sys_)
    return sys_


def evaluate(circuit: Circuit, x, t: float = 0.0) -> MnaEvaluation:
    return system_for(circuit).evaluate(x, t)


# ----------------------------------------------------------------------------
# DC operating point

def _solve(A, b):
    try:
        dx = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularMatrix("singular MNA matrix") from None
    if not np.all(np.isfinite(dx)):
        raise SingularMatrix("singular MNA matrix")
    return dx


def _newton_dc(system: MnaSystem, x, src_scale=1.0, gmin=0.0, maxiter=100):
    n = system.n
    gdiag = np.zeros(n)
    gdiag[:system.node_count] = gmin
    s = src_scale * system.sources(0.0)
    vj = system.junction_voltages(x)
    for _ in range(maxiter):
        ev = system.evaluate(x, 0.0, junction_v=vj)
        F = ev.i + s + gdiag * x
        J = ev.G + np.diag(gdiag)
        dx = _solve(J, -F)
        x_new = x + dx
        vj_new = system.junction_voltages(x_new)
        vj_lim = pnjlim(vj_new, vj, system.dio_nvt, system.dio_vcrit)
        limited = not np.array_equal(vj_lim, vj_new)
        x, vj = x_new, vj_lim
        if not limited and np.max(np.abs(dx), initial=0.0) <= 1e-12 * (1 + np.max(np.abs(x), initial=0.0)):
            ev = system.evaluate(x, 0.0)
            res = np.max(np.abs(ev.i + s + gdiag * x), initial=0.0)
            if res <= 1e-12 * (1 + np.max(np.abs(s), initial=0.0)):
                return x
    raise NoConvergence("DC Newton iteration did not converge")


def dc_residual(circuit: Circuit, x) -> float:
    system = system_for(circuit)
    ev = system.evaluate(np.asarray(x, dtype=float), 0.0)
    return float(np.max(np.abs(ev.i + ev.s), initial=0.0))


def solve_dc(circuit: Circuit, x_guess=None) -> np.ndarray:
    """DC operating point: Newton, then gmin stepping, then source stepping."""
    system = system_for(circuit)
    if not system.structural_rank_ok():
        raise SingularMatrix("MNA system is structurally singular "
                             "(floating node or loop of voltage sources/inductors)")
    x0 = np.zeros(system.n) if x_guess is None else np.asarray(x_guess, dtype=float).copy()
    try:
        return _newton_dc(system, x0)
    except (NoConvergence, SingularMatrix, ModelEvalError):
        pass

    try:
        x = x0.copy()
        for gmin in 10.0 ** np.arange(-2, -13, -1):
            x = _newton_dc(system, x, gmin=gmin)
        return _newton_dc(system, x)
    except (NoConvergence, SingularMatrix, ModelEvalError):
        pass

    x = np.zeros(system.n)
    lam, step = 0.0, 0.1
    while lam < 1.0:
        trial = min(1.0, lam + step)
        try:
            x = _newton_dc(system, x, src_scale=trial, gmin=1e-12)
            lam = trial
            step = min(step * 2, 0.5)
        except (NoConvergence, SingularMatrix, ModelEvalError):
            step /= 4
            if step < 1e-6:
                raise NoConvergence("source stepping failed") from None
    try:
        return _newton_dc(system, x)
    except (SingularMatrix, ModelEvalError) as exc:
        raise NoConvergence(f"final DC Newton failed: {exc}") from None
