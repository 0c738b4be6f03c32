import json
import math

import numpy as np
import pytest

from conflimit.connection import (
    Path,
    PathError,
    assemble_connection,
    conformal_limit,
    curvature_residual,
    evaluate_word,
    generator_paths,
    holonomy_generators,
    holonomy_report,
    relation_defect,
    relator_word,
    transport,
)
from conflimit.higgs import HiggsData, Parameters
from conflimit.vortex import new_field

from conftest import mesh_at, solved

BOLZA_TRACE = 2.0 + 2.0 * math.sqrt(2.0)


def zero_degree_conn(mesh, k=4.0, c=1.0, hbar=1.0, R=0.5):
    data = HiggsData.zero_degree(k, c)
    f = new_field(mesh, data, psi=np.full(mesh.n_classes, -0.5 * math.log(abs(k))))
    return assemble_connection(mesh, data, Parameters(hbar, R), f)


def hitchin_conn(h, c=1.0, hbar=1.0, R=1.0):
    data = HiggsData.hitchin(c)
    return assemble_connection(mesh_at(h), data, Parameters(hbar, R), solved(h, "hitchin", c, 1.0, R))


# -- assembly ----------------------------------------------------------------

def test_zero_degree_matrices(coarse):
    k, R = 3 - 4j, 0.5
    conn = zero_degree_conn(coarse, k=k, R=R)
    i = 5
    assert np.allclose(conn.M[i], [[0, k], [1, 0]], atol=1e-15)
    assert np.allclose(conn.N[i], [[0, R * R * abs(k)], [R * R * np.conj(k) / abs(k), 0]], atol=1e-15)
    MN = conn.M @ conn.N - conn.N @ conn.M
    assert np.max(np.abs(MN)) < 1e-14


def test_hitchin_matrices_structure():
    conn = hitchin_conn(0.05, c=0.0)
    ok = ~np.isnan(conn.M[:, 0, 0])
    assert np.all(conn.M[:, 0, 1] == 0) and np.all(conn.M[:, 1, 0] == 1)
    assert np.all(conn.N[:, 1, 0] == 0)
    assert np.allclose(conn.M[ok, 1, 1], -conn.M[ok, 0, 0])
    assert np.all(np.isnan(conn.M[conn.mesh.cone_class, 0, 0]))


def test_zero_degree_curvature_vanishes_on_every_face(coarse):
    cr = curvature_residual(zero_degree_conn(coarse))
    assert not np.any(np.isnan(cr))
    assert np.max(cr) <= 1e-13


def test_unsolved_field_has_order_one_curvature(coarse):
    data = HiggsData.hitchin(0.0)
    conn = assemble_connection(coarse, data, Parameters(1.0, 1.0), new_field(coarse, data))
    away = coarse.distance_to_spokes() >= 0.1
    cr = curvature_residual(conn)
    faces_away = away[coarse.cls[coarse.triangles]].all(axis=1)
    assert np.nanmedian(cr[faces_away]) > 0.1


def test_hitchin_curvature_residual_decreases():
    sups = []
    for h in (0.05, 0.025):
        conn = hitchin_conn(h)
        m = conn.mesh
        band = (m.distance_to_spokes() >= 0.1) & (m.cone_distance > 3 * conn.field.cutoff_radius)
        faces = band[m.cls[m.triangles]].all(axis=1)
        sups.append(np.nanmax(curvature_residual(conn)[faces]))
    assert sups[1] < 0.6 * sups[0]


# -- paths and transport -------------------------------------------------------

def test_relator_word_uses_each_letter_once(surface):
    w = relator_word(surface)
    assert len(w) == 8
    assert sorted(w) == sorted((g, e) for g in range(4) for e in (1, -1))


def test_generator_paths_close_up(surface):
    for p, (i, j, v) in zip(generator_paths(surface), surface.edge_pairings):
        (a0, a1), (b0, b1) = p.segments
        assert abs(a1 + v - b0) < 1e-15 and a0 == b1 == 0
        assert p.clearance(surface) > 0.3


def test_contractible_loop_is_identity(coarse):
    conn = zero_degree_conn(coarse)
    loop = Path([(0.1, 0.3 + 0.2j), (0.3 + 0.2j, -0.2 + 0.1j), (-0.2 + 0.1j, 0.1)])
    P, info = transport(conn, loop)
    assert np.max(np.abs(P - np.eye(2))) < 1e-12
    assert info["det_drift"] < 1e-12


def test_transport_composes_and_reverses(coarse):
    conn = hitchin_conn(0.05)
    a = Path([(0.0, 0.2 + 0.1j)])
    b = Path([(0.2 + 0.1j, -0.1 + 0.3j)])
    Pa, _ = transport(conn, a)
    Pb, _ = transport(conn, b)
    Pab, _ = transport(conn, Path(a.segments + b.segments))
    assert np.max(np.abs(Pab - Pa @ Pb)) < 1e-9
    Pr, _ = transport(conn, a.reversed())
    assert np.max(np.abs(Pa @ Pr - np.eye(2))) < 1e-9


def test_rk4_matches_exact_exponentials(coarse):
    conn = zero_degree_conn(coarse)
    for p in generator_paths(coarse.surface):
        E, _ = transport(conn, p, method="exact")
        Q, _ = transport(conn, p, method="rk4", tol=1e-12)
        assert np.max(np.abs(E - Q)) < 1e-8


def test_path_inside_guard_rejected(coarse):
    conn = hitchin_conn(0.05)
    corner = coarse.surface.polygon_vertices[0]
    with pytest.raises(PathError):
        transport(conn, Path([(0.0, 0.99 * corner)]))


def test_generator_traces_at_r0_are_exponentials(coarse):
    data = HiggsData.zero_degree(1.0, 1.0)
    conn = assemble_connection(coarse, data, Parameters(1.0, 0.0), new_field(coarse, data))
    hols, infos = holonomy_generators(conn)
    for H, (i, j, v) in zip(hols, coarse.surface.edge_pairings):
        assert abs(np.trace(H) - 2 * np.cosh(v)) < 1e-12
        assert abs(np.linalg.det(H) - 1) < 1e-12


@pytest.mark.parametrize("k,c,hbar,R", [(4.0, 1.0, 1.0, 0.5), (1j, 0.5, np.exp(0.3j), 0.9), (10.0, 0.3, 1.0, 0.2)])
def test_zero_degree_relation_defect(coarse, k, c, hbar, R):
    hols, infos = holonomy_generators(zero_degree_conn(coarse, k, c, hbar, R))
    assert relation_defect(hols, coarse.surface) <= 1e-8
    assert max(i["det_drift"] for i in infos) <= 1e-9


def test_zero_degree_traces_independent_of_basepoint(coarse):
    conn = zero_degree_conn(coarse, k=2 + 1j, R=0.7)
    a, _ = holonomy_generators(conn)
    b, _ = holonomy_generators(conn, basepoint=0.15 - 0.1j)
    for x, y in zip(a, b):
        assert abs(np.trace(x) - np.trace(y)) <= 1e-8


def test_hitchin_basepoint_dependence_converges():
    diffs = []
    for h in (0.05, 0.025):
        conn = hitchin_conn(h)
        a, _ = holonomy_generators(conn)
        b, _ = holonomy_generators(conn, basepoint=0.05 + 0.03j)
        diffs.append(max(abs(np.trace(x) - np.trace(y)) for x, y in zip(a, b)))
    assert diffs[1] < diffs[0] / 2.5


def test_hitchin_determinant_drift():
    _, infos = holonomy_generators(hitchin_conn(0.05))
    assert max(i["det_drift"] for i in infos) <= 1e-9


def test_bolza_uniformization_traces():
    """At c = 0, hbar = R = 1 the holonomy uniformizes the Bolza surface."""
    errs = []
    for h in (0.05, 0.025):
        hols, _ = holonomy_generators(hitchin_conn(h, c=0.0))
        tr = np.array([np.trace(H) for H in hols])
        assert np.max(np.abs(tr.imag)) < 1e-10
        errs.append(np.max(np.abs(tr.real - BOLZA_TRACE)))
    assert errs[1] < 0.06 and errs[1] < errs[0] / 2.5


def test_evaluate_word_inverse_letters():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    A /= np.sqrt(np.linalg.det(A))
    P = evaluate_word([A], [(0, 1), (0, -1)])
    assert np.allclose(P, np.eye(2), atol=1e-13)


def test_holonomy_report_file(tmp_path, coarse):
    hols, infos = holonomy_generators(zero_degree_conn(coarse))
    rep = holonomy_report(hols, infos, coarse.surface, tmp_path / "hol.json")
    back = json.loads((tmp_path / "hol.json").read_text())
    assert back == json.loads(json.dumps(rep))
    assert len(back["generators"]) == 4 and len(back["traces"]) == 4
    assert back["relation_defect"] <= 1e-8


# -- conformal limit -------------------------------------------------------------

def test_zero_degree_limit(coarse):
    k, c, hb = 4.0, 1.0, np.exp(0.4j)
    res = conformal_limit(coarse, HiggsData.zero_degree(k, c), hb, [1, 0.5, 0.25])
    lim = res.limit
    assert np.allclose(lim.M[:, 0, 1], k * c / hb, atol=1e-15)
    assert np.allclose(lim.M[:, 1, 0], c / hb, atol=1e-15)
    assert np.all(lim.N == 0)
    assert all(b < a for a, b in zip(res.distance, res.distance[1:]))
    assert res.slope == pytest.approx(2.0, abs=1e-9)  # |hbar R^2 conj(alpha) e^{2 phi}| is exactly R^2 |.|


def test_hitchin_limit_rate_small_c(coarse):
    res = conformal_limit(coarse, HiggsData.hitchin(0.25), 1.0, [1, 0.5, 0.25, 0.125, 0.0625])
    assert abs(res.slope - 4.0) <= 0.2
    assert all(b < a for a, b in zip(res.distance, res.distance[1:]))
    assert np.all(res.limit.N[:, 1, 0] == 0)


def test_limit_csv(tmp_path, coarse):
    res = conformal_limit(coarse, HiggsData.zero_degree(1.0, 1.0), 1.0, [1, 0.5])
    res.write_csv(tmp_path / "limit.csv")
    lines = (tmp_path / "limit.csv").read_text().splitlines()
    assert lines[0] == "R,entrywise_distance,lower_left_dzbar_norm"
    assert len(lines) == 3


def test_limit_rejects_bad_r_list(coarse):
    with pytest.raises(ValueError):
        conformal_limit(coarse, HiggsData.hitchin(1.0), 1.0, [0.5, 1.0])
