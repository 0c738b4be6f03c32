import csv
import json
import math

import numpy as np
import pytest

from conflimit.higgs import HiggsData, InadmissibleError, Parameters
from conflimit.quasiconformal import (
    beltrami,
    beltrami_summary,
    extension_class,
    extension_class_projection,
    oper_transversality,
    sinh_gordon_residual,
    sinh_gordon_u,
    teichmuller_distance,
    teichmuller_form_check,
)
from conflimit.vortex import new_field

from conftest import mesh_at, solved


def zd_field(mesh, k, c=1.0):
    data = HiggsData.zero_degree(k, c)
    return data, new_field(mesh, data, psi=np.full(mesh.n_classes, -0.5 * math.log(abs(k))))


# -- Beltrami differential -------------------------------------------------------

@pytest.mark.parametrize("hbar,R", [(1.0, 0.5), (np.exp(1j * math.pi / 6), 0.9), (-1j, 0.3), (0.5, 1.5)])
def test_zero_degree_modulus_is_invariant(coarse, hbar, R):
    data, f = zd_field(coarse, 3 + 1j)
    mu = beltrami(coarse, data, Parameters(hbar, R), f)
    t = abs(hbar * hbar) * R * R
    assert np.max(np.abs(np.abs(mu.mu) - t)) <= 1e-12
    assert abs(mu.sup_norm - t) <= 1e-12


def test_hitchin_c0_has_vanishing_mu():
    mu = beltrami(mesh_at(0.05), HiggsData.hitchin(0.0), Parameters(1.0, 1.0), solved(0.05, "hitchin"))
    assert np.all(mu.mu == 0) and mu.sup_norm == 0


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_hitchin_beltrami_bound(c):
    mu = beltrami(mesh_at(0.05), HiggsData.hitchin(c), Parameters(1.0, 1.0), solved(0.05, "hitchin", c))
    assert 0 < mu.sup_norm < 1
    assert mu.sup_norm == np.max(np.abs(mu.mu))


def test_inadmissible_rejected(coarse):
    data, f = zd_field(coarse, 1.0)
    with pytest.raises(InadmissibleError):
        beltrami(coarse, data, Parameters(1.0, 1.0), f)


def test_phase_covariance(coarse):
    data = HiggsData.hitchin(1.0)
    f = solved(0.05, "hitchin", 1.0, 1.0, 0.5)
    a = beltrami(coarse, data, Parameters(1.0, 0.5), f).mu
    b = beltrami(coarse, data, Parameters(np.exp(0.7j), 0.5), f).mu
    c = beltrami(coarse, data, Parameters(-1.0, 0.5), f).mu
    assert np.max(np.abs(b - np.exp(1.4j) * a)) < 1e-15
    assert np.array_equal(a, c)


def test_equal_invariant_points_agree_as_c_shrinks(coarse):
    """(1, 1/2) and (4, 1/4) share hbar^2 R^4; the fields agree to leading order in c R^2."""
    gaps = []
    for c in (1.0, 0.25):
        d = HiggsData.hitchin(c)
        a = beltrami(coarse, d, Parameters(1.0, 0.5), solved(0.05, "hitchin", c, 1.0, 0.5))
        b = beltrami(coarse, d, Parameters(4.0, 0.25), solved(0.05, "hitchin", c, 1.0, 0.25))
        gaps.append(np.max(np.abs(a.mu - b.mu)) / a.sup_norm)
    assert gaps[1] < gaps[0] / 8


def test_beltrami_files(tmp_path, coarse):
    data, f = zd_field(coarse, 1.0)
    params = Parameters(1.0, 0.5)
    mu = beltrami(coarse, data, params, f)
    mu.write_csv(tmp_path / "mu.csv")
    with open(tmp_path / "mu.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["vertex_id", "re_mu", "im_mu", "abs_mu"]
    assert len(rows) == coarse.n_classes + 1
    summ = beltrami_summary(mu, data, params, tmp_path / "s.json")
    back = json.loads((tmp_path / "s.json").read_text())
    assert back["invariant_name"] == "hbar^2 R^2" and back["invariant"] == [0.25, 0.0]
    assert back["teichmuller_distance"] == pytest.approx(teichmuller_distance(0.25), abs=0)
    assert summ["sup_norm"] == pytest.approx(0.25, abs=1e-12)


# -- sinh-Gordon ------------------------------------------------------------------

def test_sinh_gordon_precondition(coarse):
    data, f = zd_field(coarse, 1.0)
    with pytest.raises(ValueError):
        sinh_gordon_residual(coarse, data, 0.5, f, f)
    with pytest.raises(ValueError):
        sinh_gordon_residual(coarse, HiggsData.hitchin(0.0), 1.0, f, f)


@pytest.mark.parametrize("R", [1.0, 0.5])
def test_u_negative_outside_guard(R):
    m = mesh_at(0.05)
    f = solved(0.05, "hitchin", 1.0, 1.0, R)
    res = sinh_gordon_residual(m, HiggsData.hitchin(1.0), R, f, solved(0.05, "hitchin"))
    u = sinh_gordon_u(HiggsData.hitchin(1.0), f)
    assert np.max(u[~np.isnan(res)]) < 0
    assert np.all(np.isnan(res[m.cone_distance <= 3 * f.cutoff_radius]))


def test_u_constant_in_degree_zero(coarse):
    data, f = zd_field(coarse, 2 - 1j)
    u = sinh_gordon_u(data, f)
    assert np.ptp(u) == 0


def test_sinh_gordon_residual_decays_off_seams():
    sups = []
    for h in (0.05, 0.025):
        m = mesh_at(h)
        res = sinh_gordon_residual(m, HiggsData.hitchin(1.0), 1.0, solved(h, "hitchin", 1.0),
                                   solved(h, "hitchin"))
        sups.append(np.nanmax(np.abs(res[m.distance_to_spokes() >= 0.1])))
    assert math.log2(sups[0] / sups[1]) > 1.5


def test_unsolved_field_violates_sinh_gordon(coarse):
    d = HiggsData.hitchin(1.0)
    f = new_field(coarse, d, psi=np.full(coarse.n_classes, -0.5))
    res = sinh_gordon_residual(coarse, d, 1.0, f, solved(0.05, "hitchin"))
    assert np.nanmedian(np.abs(res)) > 0.5


# -- extension class and transversality ------------------------------------------------

@pytest.mark.parametrize("c,hbar,R", [(1.0, 1.0, 1.0), (0.5, np.exp(0.4j), 0.5), (2.0, 1.0, 0.5)])
def test_extension_closed_form_matches_projection(c, hbar, R):
    m = mesh_at(0.05)
    d, p = HiggsData.hitchin(c), Parameters(hbar, R)
    f = solved(0.05, "hitchin", c, 1.0, R)
    mu = beltrami(m, d, p, f)
    a = extension_class(m, d, p, f, mu).omega_coeff
    b = extension_class_projection(m, d, p, f, mu)
    assert np.max(np.abs(a - b)) <= 1e-10
    assert np.max(oper_transversality(m, d, p, f, mu)) <= 1e-9


def test_extension_at_c0_is_upper_right_coefficient():
    m = mesh_at(0.05)
    d, p = HiggsData.hitchin(0.0), Parameters(1.0, 1.0)
    f = solved(0.05, "hitchin")
    omega = extension_class(m, d, p, f, beltrami(m, d, p, f)).omega_coeff
    assert np.allclose(omega, np.exp(-2 * f.phi), rtol=1e-14, atol=0)


@pytest.mark.parametrize("hbar,R", [(1.0, 0.5), (np.exp(0.5j), 0.8), (1j, 0.0)])
def test_zero_degree_extension_trivial_and_transversal(coarse, hbar, R):
    data, f = zd_field(coarse, 4.0, 0.5)
    p = Parameters(hbar, R)
    mu = beltrami(coarse, data, p, f)
    assert np.max(np.abs(extension_class(coarse, data, p, f, mu).omega_coeff)) <= 1e-12
    assert np.max(oper_transversality(coarse, data, p, f, mu)) <= 1e-13


# -- Teichmuller ray ----------------------------------------------------------------

@pytest.mark.parametrize("hbar", [1.0, np.exp(1j * math.pi / 6), -1j])
@pytest.mark.parametrize("R", [0.1, 0.5, 0.9])
def test_teichmuller_form(coarse, hbar, R):
    data, f = zd_field(coarse, 2 + 2j, 0.7)
    p = Parameters(hbar, R)
    chk = teichmuller_form_check(beltrami(coarse, data, p, f), data, p)
    assert chk["defect"] <= 1e-12
    t = R * R
    assert chk["t"] == pytest.approx(t, abs=1e-15)
    assert chk["distance"] == pytest.approx(0.5 * math.log((1 + t) / (1 - t)), abs=1e-15)


def test_teichmuller_needs_zero_degree():
    m = mesh_at(0.05)
    d, p = HiggsData.hitchin(1.0), Parameters(1.0, 1.0)
    with pytest.raises(ValueError):
        teichmuller_form_check(beltrami(m, d, p, solved(0.05, "hitchin", 1.0)), d, p)
