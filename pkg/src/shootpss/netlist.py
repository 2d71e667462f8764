"""
SPICE-flavoured netlist reader.

Supported statements (one per line, ``*`` starts a comment line)::

    R<name> <n+> <n-> <ohm>
    C<name> <n+> <n-> <farad>
    L<name> <n+> <n-> <henry>
    V<name> <n+> <n-> [DC] <volt>
    V<name> <n+> <n-> SIN(<voff> <vamp> <freq> [<tdelay>])
    I<name> <n+> <n-> [DC] <ampere>
    B<name> <n+> <n-> POLY <a0> [<a1> [<a2> [<a3>]]]
    D<name> <anode> <cathode> [IS=<ampere>] [N=<ideality>]
    .TITLE <text>
    .DC
    .TRAN <tstep> <tstop>
    .PSS TPER=<s> [TSTAB=<s>] [MAXITR=<n>] [EPSMAX=<x>] [STEPS=<n>] [PHASENODE=<node>]
    .END

Numbers accept the engineering suffixes f, p, n, u, m, k, meg and g
(case-insensitive); trailing unit letters such as ``pF`` are ignored.
Node ``0`` is ground.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import NetlistSyntaxError, UnknownNode, ValidationError

GROUND = "0"


class DeviceKind(str, Enum):
    RESISTOR = "Resistor"
    CAPACITOR = "Capacitor"
    INDUCTOR = "Inductor"
    VSOURCE_DC = "VSourceDC"
    VSOURCE_SIN = "VSourceSin"
    ISOURCE_DC = "ISourceDC"
    POLY_CONDUCTANCE = "PolyConductance"
    DIODE = "Diode"


@dataclass(frozen=True)
class Device:
    kind: DeviceKind
    name: str
    terminals: tuple[str, str]
    params: dict[str, float]
    line: int = field(default=0, compare=False)

    @property
    def has_branch(self) -> bool:
        return self.kind in (DeviceKind.INDUCTOR, DeviceKind.VSOURCE_DC, DeviceKind.VSOURCE_SIN)


@dataclass(frozen=True)
class AnalysisCard:
    kind: str  # "DC", "TRAN" or "PSS"
    params: dict[str, object]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Circuit:
    nodes: tuple[str, ...]
    devices: tuple[Device, ...]
    analyses: tuple[AnalysisCard, ...] = ()
    title: str = ""

    def device(self, name: str) -> Device:
        for dev in self.devices:
            if dev.name.upper() == name.upper():
                return dev
        raise KeyError(name)

    def card(self, kind: str) -> AnalysisCard | None:
        for card in self.analyses:
            if card.kind == kind:
                return card
        return None

    @property
    def is_autonomous(self) -> bool:
        """True when no source depends on time."""
        return not any(d.kind == DeviceKind.VSOURCE_SIN for d in self.devices)

    @property
    def drive_period(self) -> float | None:
        """Period of the (first) sinusoidal source, if any."""
        for d in self.devices:
            if d.kind == DeviceKind.VSOURCE_SIN:
                return 1.0 / d.params["freq"]
        return None


@dataclass(frozen=True)
class NodeMap:
    """MNA row assignment. Ground carries no row."""

    node_rows: dict[str, int]
    branch_rows: dict[str, int]
    labels: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.labels)

    def row(self, node: str) -> int:
        if node == GROUND:
            raise UnknownNode("ground has no MNA row")
        try:
            return self.node_rows[node]
        except KeyError:
            raise UnknownNode(f"unknown node {node!r}") from None


# ----------------------------------------------------------------------------
# values

_SUFFIXES = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3,
             "k": 1e3, "meg": 1e6, "g": 1e9}
_NUMBER_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?([a-z]*)$",
    re.IGNORECASE)


def parse_value(token: str) -> float:
    """Convert a SPICE number such as ``31.4n`` or ``1meg`` to a float."""
    m = _NUMBER_RE.match(token)
    if m is None:
        if token.lower() in ("inf", "+inf", "-inf", "nan"):
            return float(token)
        raise ValueError(f"bad number {token!r}")
    value = float(m.group(1))
    if m.group(2):
        value *= _SUFFIXES[m.group(2).lower()]
    return value


# ----------------------------------------------------------------------------
# PSS parameters

PSS_DEFAULTS = {"MaxItr": 10, "EpsMax": 1e-12, "StepsPerPeriod": 256}

_PSS_KEYS = {"TPER": "Tper", "TSTAB": "Tstab", "MAXITR": "MaxItr", "EPSMAX": "EpsMax",
             "STEPS": "StepsPerPeriod", "STEPSPERPERIOD": "StepsPerPeriod",
             "PHASENODE": "PhaseNode"}


def validate_pss_params(params: dict, line: int = 0, column: int = 0) -> None:
    """Check the PSS kernel preconditions on whatever keys are present.

    Raises ValidationError naming the violated rule; values are never clamped.
    """
    def bad(msg):
        raise ValidationError(msg, line, column)

    for key in ("Tper", "Tstab", "EpsMax"):
        if key in params and not math.isfinite(params[key]):
            bad(f"{key} must be finite")
    tper = params.get("Tper")
    if tper is not None and not tper > 0:
        bad(f"Tper must be > 0 (got {tper:g})")
    tstab = params.get("Tstab")
    if tstab is not None and tper is not None and not tstab >= 10 * tper:
        bad(f"Tstab >= 10*Tper required (Tstab={tstab:g}, Tper={tper:g})")
    if "MaxItr" in params and not params["MaxItr"] >= 10:
        bad(f"MaxItr >= 10 required (got {params['MaxItr']})")
    if "EpsMax" in params and not params["EpsMax"] <= 1e-6:
        bad(f"EpsMax <= 1e-6 required (got {params['EpsMax']:g})")
    if "EpsMax" in params and not params["EpsMax"] > 0:
        bad("EpsMax must be > 0")
    if "StepsPerPeriod" in params and not params["StepsPerPeriod"] >= 32:
        bad(f"StepsPerPeriod >= 32 required (got {params['StepsPerPeriod']})")


# ----------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(r"\S+")


def _tokens(line: str) -> list[tuple[str, int]]:
    # parens and commas become blanks of equal width so columns survive
    cleaned = re.sub(r"[(),]", " ", line)
    return [(m.group(0), m.start() + 1) for m in _TOKEN_RE.finditer(cleaned)]


def _num(tok: tuple[str, int], lineno: int) -> float:
    try:
        return parse_value(tok[0])
    except ValueError:
        raise NetlistSyntaxError(f"expected a number, got {tok[0]!r}", lineno, tok[1]) from None


def _keyvals(toks, lineno):
    out = []
    for text, col in toks:
        if "=" not in text:
            raise NetlistSyntaxError(f"expected KEY=VALUE, got {text!r}", lineno, col)
        key, _, val = text.partition("=")
        if not key or not val:
            raise NetlistSyntaxError(f"expected KEY=VALUE, got {text!r}", lineno, col)
        out.append((key.upper(), val, col))
    return out


def _parse_device(toks, lineno) -> Device:
    name, col = toks[0]
    letter = name[0].upper()
    if len(toks) < 3:
        raise NetlistSyntaxError(f"{name}: expected two terminals", lineno, col)
    terms = (toks[1][0], toks[2][0])
    rest = toks[3:]

    def need(count):
        if len(rest) < count:
            raise NetlistSyntaxError(f"{name}: missing value", lineno, toks[-1][1])

    if letter in "RCL":
        need(1)
        if len(rest) > 1:
            raise NetlistSyntaxError(f"{name}: unexpected token {rest[1][0]!r}", lineno, rest[1][1])
        kind = {"R": DeviceKind.RESISTOR, "C": DeviceKind.CAPACITOR, "L": DeviceKind.INDUCTOR}[letter]
        key = {"R": "R", "C": "C", "L": "L"}[letter]
        return Device(kind, name, terms, {key: _num(rest[0], lineno)}, lineno)

    if letter in "VI":
        need(1)
        head = rest[0][0].upper()
        if letter == "V" and head == "SIN":
            args = rest[1:]
            if not 3 <= len(args) <= 4:
                raise NetlistSyntaxError(f"{name}: SIN takes 3 or 4 arguments", lineno, rest[0][1])
            vals = [_num(a, lineno) for a in args] + [0.0] * (4 - len(args))
            params = dict(zip(("voff", "vamp", "freq", "tdelay"), vals))
            return Device(DeviceKind.VSOURCE_SIN, name, terms, params, lineno)
        if head == "DC":
            rest = rest[1:]
            need(1)
        if len(rest) != 1:
            raise NetlistSyntaxError(f"{name}: expected a single DC value", lineno, rest[0][1])
        if letter == "V":
            return Device(DeviceKind.VSOURCE_DC, name, terms, {"V": _num(rest[0], lineno)}, lineno)
        return Device(DeviceKind.ISOURCE_DC, name, terms, {"I": _num(rest[0], lineno)}, lineno)

    if letter == "B":
        need(2)
        if rest[0][0].upper() != "POLY":
            raise NetlistSyntaxError(f"{name}: expected POLY", lineno, rest[0][1])
        coeffs = [_num(t, lineno) for t in rest[1:]]
        if len(coeffs) > 4:
            raise NetlistSyntaxError(f"{name}: at most 4 POLY coefficients", lineno, rest[5][1])
        coeffs += [0.0] * (4 - len(coeffs))
        return Device(DeviceKind.POLY_CONDUCTANCE, name, terms,
                      {f"a{k}": c for k, c in enumerate(coeffs)}, lineno)

    if letter == "D":
        params = {"IS": 1e-14, "N": 1.0}
        for key, val, vcol in _keyvals(rest, lineno):
            if key not in params:
                raise NetlistSyntaxError(f"{name}: unknown diode parameter {key}", lineno, vcol)
            params[key] = _num((val, vcol), lineno)
        return Device(DeviceKind.DIODE, name, terms, params, lineno)

    raise NetlistSyntaxError(f"unknown device type {letter!r}", lineno, col)


def _parse_card(toks, lineno) -> AnalysisCard | str | None:
    word, col = toks[0]
    word = word.upper()
    if word == ".END":
        return None
    if word == ".DC":
        return AnalysisCard("DC", {}, lineno)
    if word == ".TRAN":
        if len(toks) != 3:
            raise NetlistSyntaxError(".TRAN expects <tstep> <tstop>", lineno, col)
        return AnalysisCard("TRAN", {"tstep": _num(toks[1], lineno), "tstop": _num(toks[2], lineno)},
                            lineno)
    if word == ".PSS":
        params: dict[str, object] = {}
        for key, val, vcol in _keyvals(toks[1:], lineno):
            if key not in _PSS_KEYS:
                raise NetlistSyntaxError(f".PSS: unknown parameter {key}", lineno, vcol)
            pkey = _PSS_KEYS[key]
            if pkey == "PhaseNode":
                params[pkey] = val
            elif pkey in ("MaxItr", "StepsPerPeriod"):
                number = _num((val, vcol), lineno)
                if number != int(number):
                    raise NetlistSyntaxError(f".PSS: {key} must be an integer", lineno, vcol)
                params[pkey] = int(number)
            else:
                params[pkey] = _num((val, vcol), lineno)
        validate_pss_params(params, lineno, col)
        return AnalysisCard("PSS", params, lineno)
    raise NetlistSyntaxError(f"unknown control card {toks[0][0]}", lineno, col)


def parse_netlist(text: str) -> Circuit:
    """Parse netlist source into a validated :class:`Circuit`."""
    title = ""
    devices: list[Device] = []
    cards: list[AnalysisCard] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        if line.upper().startswith(".TITLE"):
            title = line[6:].strip()
            continue
        toks = _tokens(raw)
        if toks[0][0].startswith("."):
            card = _parse_card(toks, lineno)
            if card is None:
                break
            cards.append(card)
        else:
            devices.append(_parse_device(toks, lineno))
    return build_circuit(devices, cards, title)


def build_circuit(devices, analyses=(), title: str = "") -> Circuit:
    """Assemble and validate a circuit from already-constructed devices."""
    devices = tuple(devices)
    analyses = tuple(analyses)
    nodes = [GROUND]
    seen_nodes = {GROUND}
    seen_names: dict[str, Device] = {}
    for dev in devices:
        key = dev.name.upper()
        if key in seen_names:
            raise ValidationError(f"duplicate device name {dev.name}", dev.line, 1)
        seen_names[key] = dev
        for p, v in dev.params.items():
            if not math.isfinite(v):
                raise ValidationError(f"{dev.name}: parameter {p} is not finite", dev.line, 1)
        _check_device(dev)
        for node in dev.terminals:
            if node not in seen_nodes:
                seen_nodes.add(node)
                nodes.append(node)
    if not any(GROUND in d.terminals for d in devices):
        raise ValidationError("no device connects to ground node 0")
    _check_connected(nodes, devices)

    pss = next((c for c in analyses if c.kind == "PSS"), None)
    if pss is not None:
        phase = pss.params.get("PhaseNode")
        if phase is not None and (phase == GROUND or phase not in seen_nodes):
            raise ValidationError(f".PSS: PHASENODE {phase!r} is not a non-ground node", pss.line, 1)
    return Circuit(tuple(nodes), devices, analyses, title)


def _check_device(dev: Device) -> None:
    p = dev.params
    k = dev.kind
    key = {DeviceKind.RESISTOR: "R", DeviceKind.CAPACITOR: "C", DeviceKind.INDUCTOR: "L"}.get(k)
    if key is not None:
        if not p[key] > 0:
            raise ValidationError(f"{dev.name}: {key} must be > 0 (got {p[key]:g})", dev.line, 1)
    if k == DeviceKind.DIODE:
        if not p["IS"] > 0:
            raise ValidationError(f"{dev.name}: IS must be > 0", dev.line, 1)
        if not p["N"] >= 1:
            raise ValidationError(f"{dev.name}: N must be >= 1", dev.line, 1)
    if k == DeviceKind.VSOURCE_SIN and not p["freq"] > 0:
        raise ValidationError(f"{dev.name}: SIN frequency must be > 0", dev.line, 1)


def _check_connected(nodes, devices) -> None:
    adj: dict[str, set[str]] = {n: set() for n in nodes}
    for d in devices:
        a, b = d.terminals
        adj[a].add(b)
        adj[b].add(a)
    reached = {GROUND}
    stack = [GROUND]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in reached:
                reached.add(nb)
                stack.append(nb)
    floating = [n for n in nodes if n not in reached]
    if floating:
        raise ValidationError(f"nodes not connected to ground: {', '.join(floating)}")


def node_index_map(circuit: Circuit) -> NodeMap:
    """Assign MNA rows: non-ground nodes first, then one branch row per L/V."""
    node_rows = {}
    labels = []
    for node in circuit.nodes:
        if node != GROUND:
            node_rows[node] = len(labels)
            labels.append(f"V({node})")
    branch_rows = {}
    for dev in circuit.devices:
        if dev.has_branch:
            branch_rows[dev.name] = len(labels)
            labels.append(f"I({dev.name})")
    return NodeMap(node_rows, branch_rows, tuple(labels))


# ----------------------------------------------------------------------------
# printer

def _fmt(x: float) -> str:
    return repr(float(x))


def format_netlist(circuit: Circuit) -> str:
    """Render a circuit back to netlist text that parses to an equal Circuit."""
    out = []
    if circuit.title:
        out.append(f".TITLE {circuit.title}")
    for d in circuit.devices:
        a, b = d.terminals
        p = d.params
        k = d.kind
        if k in (DeviceKind.RESISTOR, DeviceKind.CAPACITOR, DeviceKind.INDUCTOR):
            out.append(f"{d.name} {a} {b} {_fmt(next(iter(p.values())))}")
        elif k == DeviceKind.VSOURCE_DC:
            out.append(f"{d.name} {a} {b} DC {_fmt(p['V'])}")
        elif k == DeviceKind.ISOURCE_DC:
            out.append(f"{d.name} {a} {b} DC {_fmt(p['I'])}")
        elif k == DeviceKind.VSOURCE_SIN:
            args = " ".join(_fmt(p[x]) for x in ("voff", "vamp", "freq", "tdelay"))
            out.append(f"{d.name} {a} {b} SIN({args})")
        elif k == DeviceKind.POLY_CONDUCTANCE:
            args = " ".join(_fmt(p[f"a{i}"]) for i in range(4))
            out.append(f"{d.name} {a} {b} POLY {args}")
        elif k == DeviceKind.DIODE:
            out.append(f"{d.name} {a} {b} IS={_fmt(p['IS'])} N={_fmt(p['N'])}")
    for c in circuit.analyses:
        if c.kind == "DC":
            out.append(".DC")
        elif c.kind == "TRAN":
            out.append(f".TRAN {_fmt(c.params['tstep'])} {_fmt(c.params['tstop'])}")
        elif c.kind == "PSS":
            inv = {"Tper": "TPER", "Tstab": "TSTAB", "MaxItr": "MAXITR", "EpsMax": "EPSMAX",
                   "StepsPerPeriod": "STEPS", "PhaseNode": "PHASENODE"}
            parts = []
            for key, val in c.params.items():
                sval = _fmt(val) if isinstance(val, float) else str(val)
                parts.append(f"{inv[key]}={sval}")
            out.append(".PSS " + " ".join(parts))
    out.append(".END")
    return "\n".join(out) + "\n"
