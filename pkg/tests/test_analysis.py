import numpy as np
import pytest

from shootpss.analysis import (ConvergenceReport, convergence_report, dbm, estimate_order,
                               inverse_spectrum, linear_rate, order_ratios, spectrum,
                               waveform_distance, zone_entry)
from shootpss.errors import InsufficientHistory
from shootpss.shooting import PssOptions, refine, shoot_driven
from shootpss.transient import Waveform


def periodic(values, T=1e-9):
    values = np.asarray(values, dtype=float).reshape(-1, 1)
    N = values.shape[0]
    return Waveform(0.0, T / N, np.vstack([values, values[:1]]), ("V(1)",))


def test_dbm_reference():
    # 1 V peak into 50 ohm is 10 mW
    assert dbm(1.0) == pytest.approx(10.0)
    assert dbm(0.0) == -np.inf


def test_spectrum_of_cosine():
    N = 64
    t = np.arange(N) / N
    w = periodic(0.5 + 2.0 * np.cos(2 * np.pi * 3 * t + 0.4) + 0.1 * np.sin(2 * np.pi * 5 * t))
    spec = spectrum(w, 1e9)
    assert spec.f[3] == pytest.approx(3e9)
    assert spec.phasors[0, 0] == pytest.approx(0.5)
    assert spec.magnitude[3, 0] == pytest.approx(2.0)
    assert np.angle(spec.phasors[3, 0]) == pytest.approx(0.4)
    assert spec.magnitude[5, 0] == pytest.approx(0.1)
    assert spec.dbm[3, 0] == pytest.approx(dbm(2.0))
    others = np.delete(spec.magnitude[:, 0], [0, 3, 5])
    assert others.max() < 1e-14


@pytest.mark.parametrize("N", [32, 33])
def test_parseval_and_inverse(N):
    rng = np.random.default_rng(N)
    x = rng.normal(size=N)
    spec = spectrum(periodic(x), 1e9)
    assert spec.mean_square()[0] == pytest.approx(np.mean(x ** 2), rel=1e-12)
    assert np.allclose(inverse_spectrum(spec)[:, 0], x, atol=1e-13)


def test_truncated_spectrum():
    spec = spectrum(periodic(np.ones(32)), 1e9, harmonics=4)
    assert spec.f.size == 5
    with pytest.raises(ValueError):
        spectrum(periodic(np.ones(32)), 1e9, harmonics=17)


def test_order_estimates():
    eps = [1e-1, 1e-2, 1e-4, 1e-8]
    assert order_ratios(eps) == pytest.approx([2.0, 2.0])
    assert estimate_order(eps) == pytest.approx(2.0)
    assert linear_rate(eps) == pytest.approx(4.0)
    with pytest.raises(InsufficientHistory):
        estimate_order(eps[:3])


def test_zone_entry():
    assert zone_entry([5.0, 8.0, 3.0, 1.0, 0.1]) == 1
    assert zone_entry([1.0, 0.5, 0.1]) == 0
    assert zone_entry([1.0, 2.0]) == 1


def test_waveform_distance_requires_same_mesh():
    with pytest.raises(ValueError):
        waveform_distance(periodic(np.ones(8)), periodic(np.ones(16)))


def test_driven_report(linear_rc):
    result = shoot_driven(linear_rc, 1e-6, np.zeros(3), PssOptions())
    report = convergence_report(result, refine(linear_rc, result), 10e-6)
    assert isinstance(report, ConvergenceReport)
    assert report.delta_f == [0.0, 0.0]
    assert report.K_stab == 10


def test_autonomous_report(vdp_result, vdp):
    report = convergence_report(vdp_result, refine(vdp, vdp_result), 30.5e-9)
    # 30.5 ns over a period near 1.115 ns, rounded to the nearest multiple
    assert report.K_stab == 27
    assert report.delta_f_init == pytest.approx(abs(1e9 - vdp_result.f0) / vdp_result.f0, rel=1e-6)
    assert report.eps[-1] < 1e-9
    assert len(report.eps) == len(report.delta_f) == vdp_result.iterations + 1
