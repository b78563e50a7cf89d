import math

import pytest

import pdmr


D = 2.87e9


@pytest.fixture(scope="module")
def profile():
    return pdmr.default_profile()


def test_profile_round_trip(profile):
    assert profile.get("d_gs") == pytest.approx(D)
    again = pdmr.parse_profile(profile.to_json())
    for key in profile.keys():
        assert again.get(key) == profile.get(key)
    with pytest.raises(ValueError):
        pdmr.parse_profile('{"no_such_key": 1}')


def test_zero_field_spectrum(profile):
    freqs = pdmr.linear_grid(2.77e9, 2.97e9, 2001)
    s = pdmr.synth_spectrum(profile, freqs)
    assert len(s.current) == 2001
    k = min(range(len(s.current)), key=lambda i: s.current[i])
    assert abs(s.freqs[k] - D) <= 0.1e6
    assert max(s.contrast) == pytest.approx(0.12, rel=0.01)
    dips = pdmr.detect_peaks(s.freqs, s.current)
    assert len(dips) == 1
    baseline, fitted, fit = pdmr.fit_lorentzians(s.freqs, s.current, 1)
    assert fit.converged
    assert fitted[0].center == pytest.approx(D, abs=0.5e6)
    assert baseline == pytest.approx(s.baseline, rel=1e-3)


def test_seeded_noise_is_reproducible(profile):
    freqs = pdmr.linear_grid(2.8e9, 2.94e9, 101)
    a = pdmr.synth_spectrum(profile, freqs, noise_rms=1e-5, seed=9)
    b = pdmr.synth_spectrum(profile, freqs, noise_rms=1e-5, seed=9)
    c = pdmr.synth_spectrum(profile, freqs, noise_rms=1e-5, seed=10)
    assert list(a.current) == list(b.current)
    assert list(a.current) != list(c.current)


def test_field_round_trip(profile):
    b = 5e-3
    direction = pdmr.direction_from_miller(1, 0, 0)
    freqs = pdmr.linear_grid(2.6e9, 3.14e9, 2001)
    s = pdmr.synth_spectrum(profile, freqs, b_mag=b, direction=direction)
    _, dips, _ = pdmr.fit_lorentzians(s.freqs, s.current, 2)
    r = pdmr.invert_field(dips, "100", profile)
    assert r["magnitude"] == pytest.approx(b, rel=0.01)
    refined = pdmr.refine_field(profile, s.freqs, s.current, "100", r["field"])
    assert refined["magnitude"] == pytest.approx(b, rel=1e-6)


def test_invert_aligned():
    gamma = 28e9
    b_par, inconsistent, beyond = pdmr.invert_aligned(D - gamma * 0.01, D + gamma * 0.01, D, gamma)
    assert b_par == pytest.approx(0.01, rel=1e-9)
    assert not inconsistent and not beyond


def test_power_curve_fit(profile):
    alpha, beta = 0.08, 7.0
    power = [1e-3 * 10 ** (3 * i / 30) for i in range(31)]
    current = [pdmr.photocurrent_model(p, alpha, beta) for p in power]
    r = pdmr.fit_power_curve(power, current)
    assert r["alpha"] == pytest.approx(alpha, rel=1e-6)
    assert r["beta"] == pytest.approx(beta, rel=1e-6)
    assert r["r_squared"] > 0.999


def test_iv_curve_is_monotone(profile):
    volts = [0.5 * i for i in range(1, 61)]
    curve = pdmr.iv_curve(profile, volts)
    currents = [i for _, i in curve]
    assert all(b > a for a, b in zip(currents, currents[1:]))


def test_cli_in_process():
    code, out, err = pdmr.run_cli(["spectrum", "--points", "11", "--f-start", "2.86e9", "--f-stop", "2.88e9"])
    assert code == 0, err
    table = pdmr.DataTable.parse(out)
    assert table.column_names == ["freq", "current", "contrast"]
    assert table.meta("command") == "spectrum"
    assert len(table.column("freq")) == 11
    assert all(math.isfinite(v) for v in table.column("current"))

    code, _, err = pdmr.run_cli(["spectrum", "--b-mag", "-1"])
    assert code == 1 and err
    code, _, _ = pdmr.run_cli(["calibration", "show"])
    assert code == 0
