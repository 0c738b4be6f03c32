import json
import math

import numpy as np
import pytest

from conflimit.connection import assemble_connection, holonomy_generators
from conflimit.higgs import HiggsData, Parameters
from conflimit.reality import (
    common_real_conjugator,
    fixed_set_angle,
    holonomy_reality_check,
    real_structure,
    reality_components,
    reality_residual,
    reduced_words,
)
from conflimit.vortex import new_field

from conftest import mesh_at, solved


def hitchin(c, hbar, R, h=0.05):
    f = solved(h, "hitchin", c, 1.0, R)
    return assemble_connection(mesh_at(h), HiggsData.hitchin(c), Parameters(hbar, R), f), f


def test_involution_squares_to_identity():
    f = solved(0.05, "hitchin", 1.0)
    rs = real_structure(f)
    assert rs.involution_defect() < 1e-15
    ang = fixed_set_angle(f)
    assert np.all((ang > 0) & (ang < math.pi / 2))


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 3, 2.5])
def test_higgs_part_vanishes_on_preserving_circle(theta):
    conn, f = hitchin(1.0, np.exp(1j * theta), 1.0)
    comp = reality_components(conn, real_structure(f))
    assert np.nanmax(comp["higgs"]) <= 1e-12


def test_chern_part_is_discretisation_error():
    sups = []
    for h in (0.05, 0.025):
        conn, f = hitchin(1.0, 1.0, 1.0, h)
        m = conn.mesh
        away = (m.cone_distance > 3 * f.cutoff_radius) & (m.distance_to_spokes() >= 0.1)
        sups.append(np.nanmax(reality_components(conn, real_structure(f))["chern"][away]))
    assert sups[1] < sups[0] / 2.5


@pytest.mark.parametrize("c,hbar,R", [(1.0, 1.0, 0.5), (0.0, np.exp(0.3j), 0.5), (1.0, 1.5, 0.5)])
def test_negative_controls_off_the_circle(c, hbar, R):
    conn, f = hitchin(c, hbar, R)
    comp = reality_components(conn, real_structure(f))
    assert np.nanmin(comp["higgs"]) > 1e-2
    assert np.nanmax(reality_residual(conn, real_structure(f))) > 1e-2


def test_generator_traces_real_on_the_circle():
    conn, _ = hitchin(1.0, np.exp(0.3j), 1.0)
    hols, _ = holonomy_generators(conn)
    rep = holonomy_reality_check(hols)
    assert rep["max_imag_trace_generators"] <= 1e-5
    assert rep["conjugation_imag_mass"] <= 1e-8
    assert rep["n_words"] == 8 + 56 + 392


def test_generator_traces_complex_off_the_circle():
    conn, _ = hitchin(1.0, 1.0, 0.5)
    hols, _ = holonomy_generators(conn)
    assert holonomy_reality_check(hols)["max_imag_trace_generators"] > 0.1


def test_zero_degree_holonomy_real_at_unit_parameters(coarse):
    data = HiggsData.zero_degree(1.0, 1.0)
    conn = assemble_connection(coarse, data, Parameters(1.0, 1.0), new_field(coarse, data))
    hols, _ = holonomy_generators(conn)
    rep = holonomy_reality_check(hols, max_word_length=2)
    assert rep["max_imag_trace_generators"] <= 1e-8


def test_common_real_conjugator_recovers_real_group():
    rng = np.random.default_rng(7)
    gens = []
    for _ in range(4):
        A = rng.normal(size=(2, 2))
        gens.append(A / math.sqrt(abs(np.linalg.det(A))))
    G = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    conj = [G @ A @ np.linalg.inv(G) for A in gens]
    Q, mass = common_real_conjugator(conj)
    assert mass < 1e-10
    _, mass_generic = common_real_conjugator(
        [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3)])
    assert mass_generic > 1e-3


def test_reduced_words():
    w = reduced_words(2, 3)
    assert len(w) == 4 + 12 + 36
    for word in w:
        assert all(not (a[0] == b[0] and a[1] == -b[1]) for a, b in zip(word, word[1:]))


def test_report_file(tmp_path):
    conn, _ = hitchin(1.0, 1.0, 1.0)
    hols, _ = holonomy_generators(conn)
    rep = holonomy_reality_check(hols, 1, tmp_path / "r.json")
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["n_words"] == 8 and back["max_imag_trace_generators"] == rep["max_imag_trace_generators"]
