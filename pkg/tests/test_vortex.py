import json
import math

import numpy as np
import pytest

from conflimit.higgs import HiggsData
from conflimit.vortex import (
    MetricField,
    SolverDivergence,
    curvature,
    new_field,
    rescale_check,
    solve_vortex,
    vortex_residual,
    write_field_csv,
)

from conftest import mesh_at, solved


def test_exact_zero_degree_residual(coarse):
    d = HiggsData.zero_degree(4, 1)
    f = new_field(coarse, d, psi=np.full(coarse.n_classes, -math.log(2)))
    assert np.max(np.abs(vortex_residual(coarse, d, 0.7, f))) < 1e-14


def test_flat_case_residual(coarse):
    d = HiggsData.zero_degree(2, 1)
    f = new_field(coarse, d, psi=np.full(coarse.n_classes, 0.3))
    assert np.max(np.abs(vortex_residual(coarse, d, 0.0, f))) < 1e-14


def test_overflow_guard(coarse):
    d = HiggsData.zero_degree(1, 1)
    f = new_field(coarse, d, psi=np.full(coarse.n_classes, 60.0))
    with pytest.raises(SolverDivergence):
        vortex_residual(coarse, d, 1.0, f)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_zero_degree_k1_from_bounded_start(coarse, seed):
    d = HiggsData.zero_degree(1, 1)
    start = new_field(coarse, d, psi=np.random.default_rng(seed).uniform(-1, 1, coarse.n_classes))
    f, rep = solve_vortex(coarse, d, 1.0, initial=start)
    assert rep.converged
    assert np.max(np.abs(f.phi)) < 1e-9


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0, 4j, -10.0])
def test_zero_degree_constant_solution(coarse, k):
    d = HiggsData.zero_degree(k, 1)
    f, rep = solve_vortex(coarse, d, 0.8)
    assert rep.converged
    assert np.max(np.abs(f.phi + 0.5 * math.log(abs(k)))) < 1e-9


def test_r0_zero_degree_selects_limit_constant(coarse):
    f, rep = solve_vortex(coarse, HiggsData.zero_degree(4, 1), 0.0)
    assert rep.converged and np.allclose(f.phi, -math.log(2), atol=0)


def test_r0_hitchin_rejected(coarse):
    with pytest.raises(ValueError):
        solve_vortex(coarse, HiggsData.hitchin(1), 0.0)


def test_hyperbolic_calibration_coarse(coarse):
    f = solved(0.05, "hitchin", 0.0)
    K, total, area = curvature(coarse, f)
    away = coarse.cone_distance > 3 * f.cutoff_radius
    assert np.max(np.abs(K[away] + 4)) <= 0.08
    assert total == pytest.approx(-4 * math.pi, rel=0.02)
    assert area == pytest.approx(math.pi, rel=0.02)


def test_hitchin_c1_converges(coarse):
    f, rep = solve_vortex(coarse, HiggsData.hitchin(1), 1.0)
    assert rep.converged and rep.final_residual_norm < 1e-9
    assert np.all(np.isfinite(f.psi))


def test_line_search_is_monotone(coarse):
    _, rep = solve_vortex(coarse, HiggsData.hitchin(2), 1.0)
    m = rep.merit_history
    assert all(b <= a for a, b in zip(m, m[1:]))
    assert len(rep.damping_history) == rep.iterations


def test_solver_deterministic(coarse):
    a, _ = solve_vortex(coarse, HiggsData.hitchin(1), 0.5)
    b, _ = solve_vortex(coarse, HiggsData.hitchin(1), 0.5)
    assert np.array_equal(a.psi, b.psi)


def test_nonconvergence_reported(coarse):
    _, rep = solve_vortex(coarse, HiggsData.hitchin(1), 1.0, max_iter=1)
    assert not rep.converged and rep.message


@pytest.mark.parametrize("R", [1.0, 0.5, 0.1])
def test_rescale_identity(coarse, R):
    tol = 1e-10
    assert rescale_check(coarse, HiggsData.hitchin(1), R, tol) <= (2 if R == 1 else 10) * tol


def test_limit_of_rescaled_metric_converges(coarse):
    ref = solved(0.05, "hitchin", 0.0)
    diffs, prev = [], None
    for j in range(5):
        R = 2.0**-j
        f, rep = solve_vortex(coarse, HiggsData.hitchin(R * R), 1.0)
        if prev is not None:
            diffs.append(np.max(np.abs(f.psi - prev)))
        prev = f.psi
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert np.max(np.abs(prev - ref.psi)) < diffs[0]


def test_field_and_report_formats(tmp_path, coarse):
    d = HiggsData.hitchin(1)
    f, rep = solve_vortex(coarse, d, 1.0)
    write_field_csv(f, vortex_residual(coarse, d, 1.0, f), tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "vertex_id,phi,psi,residual"
    j = json.loads(rep.to_json())
    assert set(j) == {"iterations", "residual", "damping_history", "converged"}


def test_cone_field_finite(coarse):
    f = solved(0.05, "hitchin", 1.0)
    assert isinstance(f, MetricField)
    assert np.isfinite(f.psi[coarse.cone_class]) and np.isfinite(f.phi[coarse.cone_class])
