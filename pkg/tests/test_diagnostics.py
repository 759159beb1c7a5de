import numpy as np
import pytest

from geosynth.diagnostics import autocorrelation, geweke_z, heidelberger_welch


def test_geweke_iid_mostly_small():
    hits = sum(abs(geweke_z(np.random.default_rng(s).normal(size=10_000))) < 3 for s in range(100))
    assert hits >= 99


def test_geweke_ramp_and_constant():
    assert abs(geweke_z(np.linspace(0, 1, 1000))) > 5
    with pytest.raises(ValueError):
        geweke_z(np.ones(100))
    with pytest.raises(ValueError):
        geweke_z(np.arange(10.0))


def test_heidelberger_welch_iid_passes_at_start():
    ok = 0
    for s in range(1000):
        passed, start = heidelberger_welch(np.random.default_rng(s).normal(size=1000))
        ok += passed and start == 0
    assert ok >= 950


def test_heidelberger_welch_ramp_and_constant():
    passed, _ = heidelberger_welch(np.linspace(0, 1, 500))
    assert not passed
    assert heidelberger_welch(np.full(80, 3.0)) == (True, 0)
    with pytest.raises(ValueError):
        heidelberger_welch(np.arange(20.0))


def test_heidelberger_welch_discards_burn_in():
    drift = np.r_[np.linspace(10, 0, 300), np.zeros(1700)]
    for s in range(10):
        passed, start = heidelberger_welch(np.random.default_rng(s).normal(size=2000) + drift)
        assert passed and 0 < start <= 1000


def test_autocorrelation():
    iid = np.random.default_rng(0).normal(size=10_000)
    acf = autocorrelation(iid, 5)
    assert acf[0] == 1.0 and abs(acf[1]) < 0.05
    r = np.random.default_rng(1)
    x = np.empty(20_000)
    x[0] = 0
    e = r.normal(size=x.size)
    for t in range(1, x.size):
        x[t] = 0.9 * x[t - 1] + e[t]
    assert autocorrelation(x, 1)[1] == pytest.approx(0.9, abs=0.05)
    with pytest.raises(ValueError):
        autocorrelation(np.ones(10), 2)
    with pytest.raises(ValueError):
        autocorrelation(np.arange(3.0), 3)
