import math

import pytest
from hypothesis import given, settings, strategies as st

from shootpss.errors import NetlistSyntaxError, UnknownNode, ValidationError
from shootpss.netlist import (Device, DeviceKind, build_circuit, format_netlist, node_index_map,
                              parse_netlist, parse_value, validate_pss_params)


@pytest.mark.parametrize("token, value", [
    ("1", 1.0), ("31.4n", 31.4e-9), ("1p", 1e-12), ("1meg", 1e6), ("1MEG", 1e6),
    ("2.5k", 2500.0), ("100u", 100e-6), ("-1m", -1e-3), ("1e-14", 1e-14), ("3f", 3e-15),
    ("1g", 1e9), ("10pF", 10e-12), (".5", 0.5),
])
def test_parse_value(token, value):
    assert math.isclose(parse_value(token), value, rel_tol=1e-15)


def test_parse_value_rejects_garbage():
    with pytest.raises(ValueError):
        parse_value("abc")


def test_parse_vdp_like_netlist():
    c = parse_netlist("B1 1 0 POLY 0 -1m 0 100u\nR1 1 0 5k\nL1 1 0 31.4n\nC1 1 0 1p\n"
                      ".PSS TPER=1n TSTAB=30.5n\n.END\n")
    assert c.nodes == ("0", "1")
    b = c.device("B1")
    assert b.kind == DeviceKind.POLY_CONDUCTANCE
    assert b.params == pytest.approx({"a0": 0.0, "a1": -1e-3, "a2": 0.0, "a3": 100e-6}, rel=1e-15)
    assert c.card("PSS").params == {"Tper": 1e-9, "Tstab": 30.5e-9}
    assert c.is_autonomous and c.drive_period is None


def test_node_map_puts_branches_after_nodes():
    c = parse_netlist("V1 a 0 SIN(0 1 1meg)\nR1 a b 1k\nL1 b 0 1u\n")
    m = node_index_map(c)
    assert m.labels == ("V(a)", "V(b)", "I(V1)", "I(L1)")
    assert m.row("b") == 1 and m.branch_rows == {"V1": 2, "L1": 3}
    assert not c.is_autonomous and c.drive_period == pytest.approx(1e-6)
    with pytest.raises(UnknownNode):
        m.row("0")


def test_diode_defaults_and_sin_delay():
    c = parse_netlist("V1 1 0 SIN(0.1 2 1k 5u)\nD1 1 2\nR1 2 0 1k\n")
    assert c.device("D1").params == {"IS": 1e-14, "N": 1.0}
    assert c.device("V1").params["tdelay"] == pytest.approx(5e-6)


@pytest.mark.parametrize("text, line, col", [
    ("R1 1 0\n", 1, 6),
    ("R1 1 0 1k\nQ1 1 0 2\n", 2, 1),
    ("R1 1 0 1k\nC1 1 0 x\n", 2, 8),
    ("R1 1 0 1k\n.PSS TPER=1n FOO=3\n", 2, 14),
    ("R1 1 0 1k\nB1 1 0 NOTPOLY 1\n", 2, 8),
    ("R1 1 0 1k\n.BOGUS\n", 2, 1),
])
def test_syntax_errors_carry_position(text, line, col):
    with pytest.raises(NetlistSyntaxError) as info:
        parse_netlist(text)
    assert (info.value.line, info.value.column) == (line, col)


@pytest.mark.parametrize("text, fragment", [
    ("R1 1 0 -5\n", "R must be > 0"),
    ("C1 1 0 0\nR1 1 0 1\n", "C must be > 0"),
    ("R1 1 0 1k\nR1 1 0 2k\n", "duplicate"),
    ("R1 1 2 1k\n", "ground"),
    ("R1 1 0 1k\nR2 2 3 1k\n", "not connected"),
    ("D1 1 0 IS=0\n", "IS"),
    ("D1 1 0 N=0.5\n", "N must be >= 1"),
    ("V1 1 0 SIN(0 1 0)\nR1 1 0 1\n", "frequency"),
    ("R1 1 0 1k\n.PSS TPER=1n PHASENODE=7\n", "PHASENODE"),
])
def test_validation_errors(text, fragment):
    with pytest.raises(ValidationError, match=fragment):
        parse_netlist(text)


@pytest.mark.parametrize("params, fragment", [
    ({"Tper": 0.0}, "Tper"),
    ({"Tper": 1e-9, "Tstab": 5e-9}, "Tstab >= 10"),
    ({"MaxItr": 9}, "MaxItr"),
    ({"EpsMax": 1e-5}, "EpsMax <= 1e-6"),
    ({"EpsMax": 0.0}, "EpsMax must be > 0"),
    ({"StepsPerPeriod": 16}, "StepsPerPeriod"),
])
def test_pss_parameter_rules(params, fragment):
    with pytest.raises(ValidationError, match=fragment):
        validate_pss_params(params)


def test_pss_rules_accept_boundaries():
    validate_pss_params({"Tper": 1e-9, "Tstab": 10e-9, "MaxItr": 10, "EpsMax": 1e-6,
                         "StepsPerPeriod": 32})


def test_pss_card_is_validated_at_parse_time():
    with pytest.raises(ValidationError, match="Tstab") as info:
        parse_netlist("R1 1 0 1k\n.PSS TPER=1n TSTAB=5n\n")
    assert info.value.line == 2


def test_end_stops_parsing():
    c = parse_netlist("R1 1 0 1k\n.END\nthis is not parsed\n")
    assert len(c.devices) == 1


def test_comments_and_title():
    c = parse_netlist("* comment\n.TITLE my osc\nR1 1 0 1k\n")
    assert c.title == "my osc"


def test_bundled_netlists_round_trip(vdp, linear_rc, rectifier):
    for c in (vdp, linear_rc, rectifier):
        assert parse_netlist(format_netlist(c)) == c


_values = st.floats(min_value=1e-15, max_value=1e9, allow_nan=False, allow_infinity=False)


@st.composite
def circuits(draw):
    count = draw(st.integers(1, 6))
    nodes = ["0"] + [str(k) for k in range(1, count + 1)]
    devices = []
    for k in range(1, count + 1):
        # a spanning chain keeps every node tied to ground
        a, b = str(k), nodes[draw(st.integers(0, k - 1))]
        kind = draw(st.sampled_from("RCLBD"))
        name = f"{kind}{k}"
        if kind == "B":
            coeffs = draw(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4))
            devices.append(Device(DeviceKind.POLY_CONDUCTANCE, name, (a, b),
                                  {f"a{i}": c for i, c in enumerate(coeffs)}))
        elif kind == "D":
            devices.append(Device(DeviceKind.DIODE, name, (a, b),
                                  {"IS": draw(_values), "N": draw(st.floats(1, 3))}))
        else:
            kinds = {"R": DeviceKind.RESISTOR, "C": DeviceKind.CAPACITOR, "L": DeviceKind.INDUCTOR}
            devices.append(Device(kinds[kind], name, (a, b), {kind: draw(_values)}))
    if draw(st.booleans()):
        devices.append(Device(DeviceKind.VSOURCE_SIN, "V0", ("1", "0"),
                              {"voff": draw(st.floats(-5, 5)), "vamp": draw(st.floats(0, 5)),
                               "freq": draw(_values), "tdelay": 0.0}))
    return build_circuit(devices, title="random")


@settings(max_examples=60, deadline=None)
@given(circuits())
def test_format_parse_round_trip(circuit):
    assert parse_netlist(format_netlist(circuit)) == circuit
