import math

import numpy as np
import pytest
from scipy import optimize

from stmchain import floquet
from stmchain.errors import NoConvergence, SingularLevel
from stmchain.model import Modulation, SiteParams, Truncation, build_chain, symmetric_chain

STATIC = Modulation.common(0.0, 20.0)


def closed_form_s(chain, omega, h=None):
    """Independent static reference: S = C + i K (omega - H)^-1 K^T."""
    h = floquet.static_hamiltonian(chain) if h is None else h
    k1, k2, k3, k4 = chain.port_couplings
    kk = np.array([[k1, 0], [k2, 0], [0, k3], [0, k4]])
    c = np.zeros((4, 4))
    c[0, 1] = c[1, 0] = c[2, 3] = c[3, 2] = 1
    return c + 1j * kk @ np.linalg.inv(omega * np.eye(2) - h) @ kk.T


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def random_case(rng):
    s1 = SiteParams.from_rates(6870.5 + rng.uniform(-3, 3), *rng.uniform(0.5, 4, 2), rng.uniform(0, 1))
    s2 = SiteParams.from_rates(6870.5 + rng.uniform(-3, 3), *rng.uniform(0.5, 4, 2), rng.uniform(0, 1))
    chain = build_chain(s1, s2, rng.uniform(5, 25))
    mod = Modulation(rng.uniform(0, 26), rng.uniform(0, 26), rng.uniform(14, 26), rng.uniform(-math.pi, math.pi))
    omega = chain.omega_ref + rng.uniform(-40, 40)
    return chain, mod, omega


def test_static_hamiltonian(device):
    h = floquet.static_hamiltonian(device)
    np.testing.assert_array_equal(h, [[6870.5 + 3.9j, 16.4], [16.4, 6870.5 + 3.6j]])
    np.testing.assert_array_equal(0.5 * (h + h.conj().T), [[6870.5, 16.4], [16.4, 6870.5]])


def test_static_hamiltonian_uncoupled_lossless_is_real_diagonal():
    # zero decay and zero coupling fall outside the validated domain, so check the formula directly
    h = floquet.static_hamiltonian(symmetric_chain(gamma=1e-300, kappa=0.0, lambda_static=1e-300))
    assert np.all(np.abs(h - np.diag(np.diag(h.real))) < 1e-200)


def test_reduction_vanishes_without_modulation(device):
    for P in (0, 1, 5):
        red = floquet.sideband_reduction(device, STATIC, 6870.5, P)
        assert not red.O_minus.any() and not red.O_plus.any()
    red = floquet.sideband_reduction(device, Modulation.common(20, 20), 6870.5, 0)
    assert not red.O_minus.any() and not red.O_plus.any()


def test_reduction_p1_hand_expansion(device):
    mod = Modulation.from_degrees(17, 17, 20.22, 90)
    w = device.omega_ref
    red = floquet.sideband_reduction(device, mod, w, 1)
    h0 = floquet.static_hamiltonian(device)
    b = np.diag([17 / 2, 17 / 2 * np.exp(1j * math.pi / 2)])
    eye = np.eye(2)
    o_minus = b @ np.linalg.inv(w * eye - (h0 + 20.22 * eye)) @ b.conj().T
    o_plus = b.conj().T @ np.linalg.inv(w * eye - (h0 - 20.22 * eye)) @ b
    np.testing.assert_allclose(red.O_minus, o_minus, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(red.O_plus, o_plus, rtol=1e-10, atol=1e-13)


def test_far_detuned_feedthrough(device):
    res = floquet.scattering_matrix(device, STATIC, device.omega_ref + 500, Truncation.fixed(0))
    assert abs(res.s(2, 1)) > 0.99
    assert abs(res.s(4, 1)) < 1e-3


def test_static_matches_closed_form(device):
    for w in (6850.0, 6870.5, 6887.0):
        res = floquet.scattering_matrix(device, STATIC, w, Truncation.adaptive())
        assert rel_err(res.S, closed_form_s(device, w)) < 1e-12


def test_static_dips_separated_by_two_lambda(device):
    def s21(w):
        return abs(floquet.scattering_matrix(device, STATIC, w, Truncation.fixed(0)).s(2, 1))

    grid = np.linspace(6810.5, 6930.5, 1201)
    mags = np.array([s21(w) for w in grid])
    dips = [i for i in range(1, len(grid) - 1) if mags[i] < mags[i - 1] and mags[i] < mags[i + 1]]
    assert len(dips) == 2
    refined = [optimize.minimize_scalar(s21, bracket=(grid[i - 1], grid[i], grid[i + 1])).x for i in dips]
    assert refined[1] - refined[0] == pytest.approx(32.8, abs=0.5)


def test_static_reciprocity_and_passivity(device):
    for w in np.linspace(6810.5, 6930.5, 401):
        s = floquet.scattering_matrix(device, STATIC, w, Truncation.fixed(0)).S
        assert np.max(np.abs(s - s.T)) <= 1e-10 * np.max(np.abs(s))
        assert np.linalg.norm(s, 2) <= 1 + 1e-9


def test_modulated_singular_values_logged(device):
    # not asserted: the modulation can do work on the system
    mod = Modulation.from_degrees(26, 26, 20.6, -40.4)
    worst = max(
        np.linalg.norm(floquet.scattering_matrix(device, mod, w, Truncation.adaptive()).S, 2)
        for w in np.linspace(6830.5, 6910.5, 81)
    )
    print(f"max singular value under modulation: {worst:.6f}")
    assert math.isfinite(worst)


@pytest.mark.parametrize("seed", range(20))
def test_continued_fraction_matches_banded(seed):
    rng = np.random.default_rng(seed)
    chain, mod, omega = random_case(rng)
    for P in range(1, 7):
        cf = floquet.scattering_matrix(chain, mod, omega, Truncation.fixed(P)).S
        band = floquet.banded_solve(chain, mod, omega, P).S
        assert rel_err(cf, band) < 1e-10


def test_banded_limits(device):
    mod = Modulation.common(26, 20.6, 1.0)
    w = device.omega_ref + 3.0
    ref = closed_form_s(device, w)
    assert rel_err(floquet.banded_solve(device, STATIC, w, 4).S, ref) < 1e-12
    assert rel_err(floquet.banded_solve(device, mod, w, 0).S, ref) < 1e-12


def test_adaptive_converges_and_reports_order(device):
    mod = Modulation.from_degrees(26, 26, 20.6, -40.4)
    res = floquet.scattering_matrix(device, mod, device.omega_ref, Truncation.adaptive(1e-9))
    assert 1 < res.P_used < 40
    prev = floquet.scattering_matrix(device, mod, device.omega_ref, Truncation.fixed(res.P_used - 1)).S
    assert floquet.relative_change(res.S, prev) < 1e-9
    deeper = floquet.scattering_matrix(device, mod, device.omega_ref, Truncation.fixed(res.P_used + 5)).S
    assert rel_err(res.S, deeper) < 1e-8


def test_adaptive_cap_raises(device):
    mod = Modulation.common(26, 20.6)
    with pytest.raises(NoConvergence):
        floquet.scattering_matrix(device, mod, device.omega_ref, Truncation.adaptive(1e-15, cap=2))


def test_singular_level_reports_index():
    g = 1e-15
    chain = symmetric_chain(gamma=g, kappa=0.0, lambda_static=16.0)
    mod = Modulation.common(10, 20.0)
    # the p = 1 lower-ladder level is (delta - omega_m) - H0, singular at delta = omega_m + lambda
    with pytest.raises(SingularLevel) as err:
        floquet.sideband_reduction(chain, mod, chain.omega_ref + 36.0, 1)
    assert abs(err.value.p) == 1


def test_site_exchange_symmetry(sym_device):
    for phi in np.radians([17.0, 90.0, -123.0]):
        for w in (6860.0, 6870.5, 6881.0):
            a = floquet.scattering_matrix(sym_device, Modulation.common(22, 19.0, phi), w, Truncation.adaptive())
            b = floquet.scattering_matrix(sym_device, Modulation.common(22, 19.0, -phi), w, Truncation.adaptive())
            assert abs(a.s(4, 1) - b.s(2, 3)) <= 1e-9 * abs(a.s(4, 1))
            assert abs(a.s(2, 3) - b.s(4, 1)) <= 1e-9 * abs(a.s(2, 3))


@pytest.mark.parametrize("phi", [0.0, math.pi])
def test_trivial_phase_reciprocity(sym_device, phi):
    for w in (6855.0, 6870.5, 6879.0):
        r = floquet.scattering_matrix(sym_device, Modulation.common(22, 19.0, phi), w, Truncation.adaptive())
        assert abs(r.s(4, 1) - r.s(2, 3)) <= 1e-9 * abs(r.s(4, 1))


def test_spectrum_rows(device):
    rows = floquet.spectrum(device, STATIC, [6870.5], Truncation.fixed(0))
    assert len(rows) == 1 and rows[0].status == "ok"
    with pytest.raises(ValueError):
        floquet.spectrum(device, STATIC, [2.0, 1.0], Truncation.fixed(0))
    with pytest.raises(ValueError):
        floquet.spectrum(device, STATIC, [], Truncation.fixed(0))


def test_spectrum_records_failures():
    chain = symmetric_chain(gamma=1e-15, kappa=0.0, lambda_static=16.0)
    grid = [chain.omega_ref + 1.0, chain.omega_ref + 36.0, chain.omega_ref + 40.0]
    rows = floquet.spectrum(chain, Modulation.common(10, 20.0), grid, Truncation.fixed(1))
    assert [r.status.split(":")[0] for r in rows] == ["ok", "SingularLevel", "ok"]
    assert rows[1].result is None


def test_static_spectrum_two_dips(device):
    grid = np.linspace(device.omega_ref - 60, device.omega_ref + 60, 241)
    rows = floquet.spectrum(device, STATIC, grid, Truncation.fixed(0), threads=4)
    mags = np.array([abs(r.result.s(2, 1)) for r in rows])
    for r in rows:
        assert np.allclose(r.result.S, closed_form_s(device, r.omega), rtol=0, atol=1e-12)
    minima = np.flatnonzero((mags[1:-1] < mags[:-2]) & (mags[1:-1] < mags[2:])) + 1
    assert len(minima) == 2
