import io
import os
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import shootpss.cli as cli
from conftest import bundled_path
from shootpss import errors
from shootpss.datasets import Dataset, DatasetKind, read_dataset, write_dataset
from shootpss.errors import DatasetIOError
from shootpss.shooting import _newton_driven


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_vdp_run_writes_all_datasets(tmp_path):
    code, out, _ = run([bundled_path("vdp.cir"), "--tper", "1n", "--tstab", "30.5n",
                        "--out", str(tmp_path)])
    assert code == 0
    names = set(os.listdir(tmp_path))
    assert {"vdp.Vt", "vdp.Vp", "vdp.Vpa", "vdp.conv"} <= names
    vp = read_dataset(str(tmp_path / "vdp.Vp"))
    assert vp.kind == DatasetKind.PSS_TIME
    assert list(vp.columns) == ["t", "V(1)"]
    assert len(vp.columns["t"]) == 257
    f0 = float(vp.metadata["f0"])
    spec = read_dataset(str(tmp_path / "vdp.Vpa"))
    assert np.allclose(spec.columns["f"], f0 * np.arange(129), rtol=1e-15)
    assert list(spec.columns) == ["f", "|V(1)|", "dBm(V(1))"]
    conv = read_dataset(str(tmp_path / "vdp.conv"))
    assert list(conv.columns)[:3] == ["l", "eps", "delta_f"]
    assert conv.columns["l"][-1] == int(vp.metadata["iterations"])


def test_tstab_rule_rejected(tmp_path):
    code, _, err = run([bundled_path("vdp.cir"), "--tper", "1n", "--tstab", "5n",
                        "--out", str(tmp_path)])
    assert code == 1
    assert "Tstab >= 10*Tper" in err
    assert os.listdir(tmp_path) == []


def test_linear_rc_one_iteration(tmp_path):
    code, _, _ = run([bundled_path("linear_rc.cir"), "--tper", "1u", "--out", str(tmp_path)])
    assert code == 0
    meta = read_dataset(str(tmp_path / "linear_rc.Vp")).metadata
    assert meta["iterations"] == "1" and meta["converged"] == "True"
    assert float(meta["residual"]) <= 1e-12


def test_report_flag_prints_summary(tmp_path):
    code, out, _ = run([bundled_path("rectifier.cir"), "--report", "--out", str(tmp_path)])
    assert code == 0
    assert "f0" in out and "multipliers" in out


def test_seed_transient_only(tmp_path):
    code, _, _ = run([bundled_path("vdp.cir"), "--seed-transient-only", "--out", str(tmp_path)])
    assert code == 0
    assert sorted(os.listdir(tmp_path)) == ["vdp.It", "vdp.Vt"]


def test_max_iterations_writes_partial_datasets(tmp_path, monkeypatch):
    def one_update(circuit, T0, x_guess, opts, t0=0.0):
        return _newton_driven(circuit, np.zeros(len(x_guess)), T0, t0, opts, 1, 1e-30)

    monkeypatch.setattr(cli, "shoot_driven", one_update)
    code, _, err = run([bundled_path("rectifier.cir"), "--out", str(tmp_path)])
    assert code == 2
    assert "no convergence" in err
    vp = read_dataset(str(tmp_path / "rectifier.Vp"))
    assert vp.metadata["converged"] == "False"
    conv = read_dataset(str(tmp_path / "rectifier.conv"))
    assert np.isnan(conv.columns["eps"]).all()


def test_syntax_error_reports_position(tmp_path):
    path = tmp_path / "bad.cir"
    path.write_text("R1 1 0 1k\nC1 1 0 oops\n")
    code, _, err = run([str(path), "--tper", "1n", "--out", str(tmp_path)])
    assert code == 1
    assert re.search(r"bad\.cir:2:8: ", err)


def test_missing_netlist_is_io_error(tmp_path):
    code, _, _ = run([str(tmp_path / "none.cir")])
    assert code == cli.EXIT_IO


@pytest.mark.parametrize("flags, fragment", [
    (["--tper", "1.5u", "--tstab", "20u"], "multiple of the drive period"),
    (["--phase-node", "9"], "phase node"),
    (["--maxitr", "3"], "MaxItr"),
    (["--epsmax", "1e-3"], "EpsMax"),
    (["--steps", "16"], "StepsPerPeriod"),
    (["--tper=-1u"], "Tper"),
])
def test_parameter_gate(tmp_path, flags, fragment):
    code, _, err = run([bundled_path("linear_rc.cir"), "--out", str(tmp_path), *flags])
    assert code == 1
    assert fragment in err


def test_bad_flag_value():
    code, _, err = run([bundled_path("linear_rc.cir"), "--steps", "abc"])
    assert code == 1 and "bad number" in err


def test_tper_required_for_oscillator(tmp_path):
    path = tmp_path / "osc.cir"
    path.write_text("B1 1 0 POLY 0 -1m 0 100u\nL1 1 0 31.4n\nC1 1 0 1p\n")
    code, _, err = run([str(path), "--out", str(tmp_path)])
    assert code == 1 and "Tper is required" in err


def _all_subclasses(cls):
    for sub in cls.__subclasses__():
        yield sub
        yield from _all_subclasses(sub)


def test_exit_code_contract_is_exhaustive():
    documented = {int(m) for m in re.findall(r"^(\d)\s{2,}", cli.__doc__, re.M)}
    classes = [c for c in vars(errors).values()
               if isinstance(c, type) and issubclass(c, errors.PssError)]
    assert set(_all_subclasses(errors.PssError)) <= set(classes)
    for cls in classes:
        assert cls in cli.EXIT_CODES
        exc = cls.__new__(cls)
        assert cli.exit_code(exc) != 0
        assert cli.exit_code(exc) in documented
    assert cli.exit_code(errors.MaxIterationsExceeded("x")) == 2
    assert cli.exit_code(errors.ValidationError("x")) == 1
    assert cli.exit_code(DatasetIOError("x")) == cli.EXIT_IO


def test_pss_time_set_shape(tmp_path):
    t = np.linspace(0, 1e-9, 257)
    ds = Dataset(DatasetKind.PSS_TIME, {"t": t, "V(1)": np.sin(t), "V(2)": np.cos(t)}, {"f0": 1e9})
    path = write_dataset(ds, str(tmp_path), "x")
    assert path.endswith("x.Vp")
    lines = open(path).read().splitlines()
    data = [ln for ln in lines if not ln.startswith("#")][1:]
    assert len(data) == 257
    assert all(len(ln.split(",")) == 3 for ln in data)


def test_dataset_rejects_ragged_columns():
    with pytest.raises(ValueError):
        Dataset(DatasetKind.TRANSIENT, {"t": [0.0, 1.0], "V(1)": [0.0]})


def test_unknown_extension(tmp_path):
    with pytest.raises(DatasetIOError):
        read_dataset(str(tmp_path / "x.csv"))


_floats = st.floats(allow_nan=True, allow_infinity=True, width=64)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 20), st.integers(1, 4), st.data(),
       st.sampled_from([(k, q) for k in DatasetKind for q in "VI"]))
def test_dataset_round_trip(tmp_path_factory, rows, cols, data, kind_q):
    kind, quantity = kind_q
    if kind == DatasetKind.CONVERGENCE:
        quantity = "V"
    columns = {f"c{j}": np.array(data.draw(st.lists(_floats, min_size=rows, max_size=rows)))
               for j in range(cols)}
    meta = {"f0": data.draw(st.floats(allow_nan=False)), "iterations": data.draw(st.integers()),
            "tool": "shootpss"}
    ds = Dataset(kind, columns, meta, quantity)
    path = write_dataset(ds, str(tmp_path_factory.mktemp("ds")), "r")
    assert read_dataset(path) == ds
