"""Batch front end.

Subcommands: ``mesh``, ``solve``, ``family``, ``holonomy``, ``limit``,
``beltrami``, ``reality``, ``sweep``, ``report``.  Exit codes: 0 success,
2 invalid configuration, 3 solver failure, 4 invariant violation (the first
failing check is named on stderr).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import CHECKS, ConfigError, RunConfig, load_config, parse_checks
from .connection import (
    PathError,
    assemble_connection,
    conformal_limit,
    curvature_residual,
    holonomy_generators,
    holonomy_report,
    relation_defect,
)
from .higgs import HITCHIN, ZERO_DEGREE, HiggsData, InadmissibleError, Parameters
from .quasiconformal import (
    beltrami,
    beltrami_summary,
    extension_class,
    extension_class_projection,
    oper_transversality,
    sinh_gordon_residual,
    sinh_gordon_u,
)
from .reality import fixed_set_angle, holonomy_reality_check, real_structure, reality_components
from .surface import (
    Mesh,
    build_octagon_surface,
    triangulate,
    write_mesh_csv,
    write_surface_config,
)
from .vortex import (
    MetricField,
    SolverDivergence,
    curvature,
    rescale_check,
    solve_vortex,
    vortex_residual,
    write_field_csv,
)

__all__ = ["main", "run", "Pipeline", "CheckResult"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4
FLATNESS_BUDGET = 0.1  # sup curvature residual that flags an unsolved Hitchin field
SEAM_BAND = 0.1  # distance to the fan seams excluded from pointwise order fits


class SolverFailure(RuntimeError):
    pass


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": _num(self.value),
                "threshold": _num(self.threshold), "detail": self.detail}


def _num(x):
    """JSON-safe float (NaN/inf become strings)."""
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _cpair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class Pipeline:
    """Lazily built mesh -> field -> connection chain for one configuration."""

    cfg: RunConfig
    out: Path
    mesh_level: int = 0
    checks: list[CheckResult] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    _mesh: Mesh | None = None
    _fields: dict = field(default_factory=dict)
    _conn: object = None

    # -- building blocks ------------------------------------------------
    @property
    def mesh(self) -> Mesh:
        if self._mesh is None:
            surf = build_octagon_surface(self.cfg.circumradius)
            self._mesh = triangulate(surf, self.cfg.edge_length(self.mesh_level), self.cfg.cone_grading)
        return self._mesh

    def solve(self, data: HiggsData, R: float) -> MetricField:
        key = (data, float(R))
        if key not in self._fields:
            try:
                f, rep = solve_vortex(self.mesh, data, R, self.cfg.tolerance, self.cfg.max_iter,
                                      cutoff_radius=self.cfg.cutoff_radius)
            except SolverDivergence as exc:
                raise SolverFailure(str(exc)) from exc
            if not rep.converged:
                raise SolverFailure(f"vortex solve did not converge at R={R}: {rep.message}")
            self._fields[key] = (f, rep)
        return self._fields[key][0]

    @property
    def field(self) -> MetricField:
        return self.solve(self.cfg.data, self.cfg.R)

    @property
    def conn(self):
        if self._conn is None:
            self._conn = assemble_connection(self.mesh, self.cfg.data, self.cfg.params, self.field)
        return self._conn

    @property
    def guard(self) -> float:
        return 3.0 * self.field.cutoff_radius

    def wants(self, name: str) -> bool:
        return name in self.cfg.checks

    def check(self, name: str, passed: bool, value: float, threshold: float, detail: str = "") -> None:
        self.checks.append(CheckResult(name, bool(passed), float(value), float(threshold), detail))

    # -- stages ---------------------------------------------------------
    def stage_mesh(self) -> None:
        m = self.mesh
        write_surface_config(m.surface, self.out / "surface.ini")
        write_mesh_csv(m, self.out / "mesh_vertices.csv", self.out / "mesh_triangles.csv")
        area_err = abs(float(m.vertex_areas.sum()) - m.surface.area())
        fan_err = abs(m.cone_fan_angle() - 6.0 * math.pi)
        info = {"n_vertices": int(m.n_classes), "n_triangles": int(m.n_faces),
                "euler_characteristic": int(m.euler_characteristic()),
                "cone_fan_angle_defect": fan_err, "area_defect": area_err,
                "min_cotan_weight": float(m.min_cotan_weight()), "edge_length": float(m.h)}
        _dump(self.out / "mesh.json", info)
        self.summary["mesh"] = info
        if self.wants("mesh"):
            ok = (info["euler_characteristic"] == -2 and fan_err <= 1e-12
                  and area_err <= 1e-12 * m.surface.area() and info["min_cotan_weight"] >= -1e-12)
            self.check("mesh", ok, fan_err, 1e-12,
                       "Euler characteristic -2, cone angle 6 pi, total area, nonnegative weights")

    def stage_solve(self) -> None:
        cfg, m = self.cfg, self.mesh
        data = cfg.data
        try:
            f = self.field
        except SolverFailure:
            if self.wants("convergence"):
                self.check("convergence", False, float("inf"), cfg.tolerance, "vortex solver")
            raise
        rep = self._fields[(data, float(cfg.R))][1]
        res = vortex_residual(m, data, cfg.R, f)
        write_field_csv(f, res, self.out / "field.csv")
        (self.out / "solve_report.json").write_text(rep.to_json())
        self.summary["solve"] = {"iterations": rep.iterations, "residual": rep.final_residual_norm,
                                 "converged": rep.converged}
        if self.wants("convergence"):
            self.check("convergence", rep.final_residual_norm <= cfg.tolerance, rep.final_residual_norm,
                       cfg.tolerance, "vortex residual sup-norm")
        if data.family == ZERO_DEGREE and self.wants("exact"):
            dev = float(np.max(np.abs(f.phi + 0.5 * math.log(abs(data.k)))))
            self.summary["solve"]["exact_deviation"] = dev
            self.check("exact", dev <= 1e-9, dev, 1e-9, "phi = -1/2 log|k|")
        if data.family == HITCHIN and data.c == 0 and cfg.R == 1.0 and self.wants("curvature"):
            K, total, area = curvature(m, f)
            away = m.cone_distance > self.guard
            kdev = float(np.max(np.abs(K[away] + 4.0)) / 4.0)
            tdev = abs(total + 4.0 * math.pi) / (4.0 * math.pi)
            self.summary["solve"].update({"curvature_rel_deviation": kdev, "total_curvature": total,
                                          "area": area})
            self.check("curvature", kdev <= 0.02 and tdev <= 0.02, max(kdev, tdev), 0.02,
                       "curvature -4 and total curvature -4 pi")
        if data.family == HITCHIN and cfg.R > 0 and self.wants("rescale"):
            d = rescale_check(m, data, cfg.R, cfg.tolerance, cfg.cutoff_radius)
            self.summary["solve"]["rescale_defect"] = d
            self.check("rescale", d <= 10 * cfg.tolerance, d, 10 * cfg.tolerance,
                       "h_R = R h for (R^2 alpha, beta)")

    def curvature_sup(self) -> tuple[float, np.ndarray]:
        cr = curvature_residual(self.conn)
        cen = self.mesh.points[self.mesh.triangles].mean(axis=1)
        corners = np.asarray(self.mesh.surface.polygon_vertices)
        r = np.abs(cen[:, None] - corners[None, :]).min(axis=1)
        return float(np.nanmax(np.where(r > self.guard, cr, np.nan))), cr

    def stage_family(self) -> None:
        sup, cr = self.curvature_sup()
        with open(self.out / "curvature_residual.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["face_id", "residual"])
            for i, v in enumerate(cr):
                w.writerow([i, repr(float(v))])
        info = {"curvature_residual_sup": sup, "constant": bool(self.conn.constant)}
        _dump(self.out / "family.json", info)
        self.summary["family"] = info
        if self.wants("flatness"):
            thr = 1e-12 if self.cfg.family == ZERO_DEGREE else FLATNESS_BUDGET
            self.check("flatness", sup <= thr, sup, thr, "curvature residual outside the guard")

    def stage_holonomy(self) -> list[np.ndarray]:
        try:
            hols, infos = holonomy_generators(self.conn)
        except PathError as exc:
            raise ConfigError(str(exc)) from exc
        rep = holonomy_report(hols, infos, self.mesh.surface, self.out / "holonomy.json")
        self.summary["holonomy"] = {k: rep[k] for k in ("traces", "relation_defect", "det_drift")}
        if self.wants("relation"):
            thr = 1e-8 if self.cfg.family == ZERO_DEGREE else 1e-5
            self.check("relation", rep["relation_defect"] <= thr, rep["relation_defect"], thr,
                       "surface-group relator")
        if self.wants("determinant"):
            self.check("determinant", rep["det_drift"] <= 1e-9, rep["det_drift"], 1e-9,
                       "determinant drift before renormalisation")
        return hols

    def stage_limit(self) -> None:
        cfg = self.cfg
        try:
            res = conformal_limit(self.mesh, cfg.data, cfg.hbar, cfg.R_list, cfg.tolerance, cfg.cutoff_radius)
        except RuntimeError as exc:
            raise SolverFailure(str(exc)) from exc
        res.write_csv(self.out / "convergence.csv")
        N0 = res.limit.N
        info = {"R": res.R, "distance": res.distance, "lower_left_dzbar": res.lower_left_dzbar,
                "slope": _num(res.slope), "limit_lower_left_dzbar_sup": float(np.max(np.abs(N0[:, 1, 0])))}
        _dump(self.out / "limit.json", info)
        self.summary["limit"] = info
        if self.wants("limit"):
            if cfg.family == HITCHIN and cfg.data.c != 0:
                ok = abs(res.slope - 4.0) <= 0.2 and info["limit_lower_left_dzbar_sup"] == 0.0
                self.check("limit", ok, res.slope, 4.0, "lower-left dzbar slope 4 +- 0.2; limit lower-left pure dz")
            else:
                nsup = float(np.max(np.abs(N0))) if cfg.family == ZERO_DEGREE else info["limit_lower_left_dzbar_sup"]
                self.check("limit", nsup == 0.0, nsup, 0.0, "limit dzbar part")

    def stage_beltrami(self) -> None:
        cfg, m, f = self.cfg, self.mesh, self.field
        data, params = cfg.data, cfg.params
        mu = beltrami(m, data, params, f)
        mu.write_csv(self.out / "beltrami.csv")
        summ = beltrami_summary(mu, data, params)
        info = dict(summ)
        if self.wants("beltrami"):
            ok = mu.sup_norm < 1.0
            if data.family == ZERO_DEGREE:
                ok = ok and abs(mu.sup_norm - params.t) <= 1e-12
            self.check("beltrami", ok, mu.sup_norm, 1.0, "sup |mu| < 1")
        ext = extension_class(m, data, params, f, mu).omega_coeff
        proj = extension_class_projection(m, data, params, f, mu)
        ext_dev = float(np.max(np.abs(ext - proj)))
        info["extension_deviation"] = ext_dev
        info["extension_sup"] = float(np.max(np.abs(ext)))
        if self.wants("extension"):
            ok = ext_dev <= 1e-10 and (data.family != ZERO_DEGREE or info["extension_sup"] <= 1e-12)
            self.check("extension", ok, ext_dev, 1e-10, "closed form vs coframe projection")
        tr = float(np.max(oper_transversality(m, data, params, f, mu)))
        info["transversality"] = tr
        if self.wants("transversality"):
            thr = 1e-13 if data.family == ZERO_DEGREE else 10 * cfg.tolerance
            self.check("transversality", tr <= thr, tr, thr, "(0,1)_mu part of the lower-left entry")
        if data.family == ZERO_DEGREE and self.wants("teichmuller"):
            d = info["teichmuller_defect"]
            self.check("teichmuller", d <= 1e-12, d, 1e-12, "mu |Q| = t conj(Q)")
        if data.family == HITCHIN and data.c != 0 and cfg.R > 0 and self.wants("sinh_gordon"):
            info.update(self.sinh_gordon())
        _dump(self.out / "beltrami.json", info)
        self.summary["beltrami"] = info

    def sinh_gordon(self) -> dict:
        """Residual on this mesh and the next refinement; order fitted off the fan seams."""
        cfg = self.cfg
        sups, umax = [], -math.inf
        for level in (self.mesh_level, self.mesh_level + 1):
            p = self if level == self.mesh_level else Pipeline(cfg, self.out, level)
            ref = p.solve(HiggsData.hitchin(0.0), 1.0)
            f = p.field
            res = sinh_gordon_residual(p.mesh, cfg.data, cfg.R, f, ref)
            band = p.mesh.distance_to_spokes() >= SEAM_BAND
            sups.append(float(np.nanmax(np.abs(res[band]))))
            u = sinh_gordon_u(cfg.data, f)
            umax = max(umax, float(np.max(u[~np.isnan(res)])))
        order = math.log(sups[0] / sups[1], 2.0)
        if self.wants("sinh_gordon"):
            self.check("sinh_gordon", order >= 1.7 and umax < 0, order, 1.7,
                       "residual order off the seams; u < 0 outside the guard")
        return {"sinh_gordon_sup": sups, "sinh_gordon_order": order, "u_max": umax}

    def stage_reality(self, hols=None) -> None:
        cfg = self.cfg
        rs = real_structure(self.field)
        comp = reality_components(self.conn, rs)
        away = self.mesh.cone_distance > self.guard
        if hols is None:
            hols, _ = holonomy_generators(self.conn)
        rep = holonomy_reality_check(hols)
        info = {
            "preserving": abs(cfg.params.t - 1.0) <= 1e-12,
            "higgs_residual": float(np.nanmax(comp["higgs"])),
            "chern_residual": float(np.nanmax(comp["chern"][away])),
            "involution_defect": rs.involution_defect(),
            "min_fixed_set_angle": float(np.min(fixed_set_angle(self.field))),
            **rep,
        }
        _dump(self.out / "reality.json", info)
        self.summary["reality"] = {k: v for k, v in info.items() if k != "word_imag_traces"}
        if self.wants("reality") and info["preserving"]:
            ok = info["higgs_residual"] <= 1e-12 and info["max_imag_trace_generators"] <= 1e-5 \
                and info["min_fixed_set_angle"] > 0
            self.check("reality", ok, info["max_imag_trace_generators"], 1e-5,
                       "Higgs part <= 1e-12 and generator |Im tr| <= 1e-5")

    def write_plot_script(self) -> None:
        m = self.mesh
        with open(self.out / "heatmap.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "abs_mu", "phi", "residual"])
            mu = None
            try:
                mu = np.abs(beltrami(m, self.cfg.data, self.cfg.params, self.field).mu)
            except InadmissibleError:
                mu = np.full(m.n_classes, np.nan)
            res = vortex_residual(m, self.cfg.data, self.cfg.R, self.field)
            phi = self.field.phi
            for p, c in zip(m.points, m.cls):
                w.writerow([repr(float(p.real)), repr(float(p.imag)), repr(float(mu[c])),
                            repr(float(phi[c])), repr(float(res[c]))])
        (self.out / "plot.gp").write_text(PLOT_SCRIPT)


PLOT_SCRIPT = """# gnuplot script: run `gnuplot plot.gp` inside the output directory
set datafile separator ','
set terminal pngcairo size 900,800
set size ratio -1
set palette rgbformulae 33,13,10
do for [col in "abs_mu phi residual"] {
    set output col.'.png'
    set title col
    plot 'heatmap.csv' using 1:2:(column(col)) skip 1 with points pt 7 ps 0.5 palette notitle
}
if (system('test -f convergence.csv && echo 1') eq '1') {
    set output 'convergence.png'
    set size noratio
    set logscale xy
    set xlabel 'R'
    set ylabel 'lower-left dzbar norm'
    set title 'R-convergence'
    f(x) = a + b * x
    fit f(x) 'convergence.csv' using (log($1)):(log($3)) skip 1 via a, b
    plot 'convergence.csv' using 1:3 skip 1 with linespoints title 'data', \\
         exp(a) * x**b title sprintf('slope %.3f', b)
}
"""


# --------------------------------------------------------------------------
# sweep


def _sweep_point(args) -> dict:
    cfg, level, index, hbar, R = args
    row = {"index": index, "hbar_re": hbar.real, "hbar_im": hbar.imag, "R": R}
    data = cfg.data
    inv = hbar * hbar * R * R if data.family == ZERO_DEGREE else hbar * hbar * R**4
    row.update({"invariant_re": inv.real, "invariant_im": inv.imag})
    try:
        sub = RunConfig(**{**cfg.__dict__, "hbar": hbar, "R": R})
        p = Pipeline(sub, Path("."), level)
        params = Parameters(hbar, R)
        mu = beltrami(p.mesh, data, params, p.field)
        row["sup_mu"] = mu.sup_norm
        hols, _ = holonomy_generators(p.conn)
        row["relation_defect"] = relation_defect(hols, p.mesh.surface)
        comp = reality_components(p.conn, real_structure(p.field))
        row["reality_residual"] = float(np.nanmax(comp["higgs"]))
        row["curvature_residual"] = p.curvature_sup()[0]
        row["status"] = "ok"
        row["message"] = ""
    except (SolverFailure, SolverDivergence, InadmissibleError, PathError, ValueError, RuntimeError) as exc:
        for k in ("sup_mu", "relation_defect", "reality_residual", "curvature_residual"):
            row.setdefault(k, float("nan"))
        row["status"] = "failed"
        row["message"] = str(exc)
    return row


SWEEP_COLUMNS = ["index", "hbar_re", "hbar_im", "R", "invariant_re", "invariant_im", "sup_mu",
                 "relation_defect", "reality_residual", "curvature_residual", "status", "message"]


def sweep(cfg: RunConfig, out: Path, mesh_level: int = 0, jobs: int = 1) -> list[dict]:
    """One row per grid point, ordered by grid index regardless of completion order."""
    tasks = [(cfg, mesh_level, i, hb, R) for i, hb, R in cfg.grid()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    rows.sort(key=lambda r: r["index"])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    _dump(out / "sweep.json", {"family": cfg.family, "n_points": len(rows),
                               "n_failed": sum(r["status"] != "ok" for r in rows),
                               "rows": [{k: _num(v) if isinstance(v, float) else v for k, v in r.items()}
                                        for r in rows]})
    return rows


# --------------------------------------------------------------------------
# entry points

COMMANDS = ("mesh", "solve", "family", "holonomy", "limit", "beltrami", "reality", "sweep", "report")


def run(command: str, cfg: RunConfig, out: Path, mesh_level: int = 0, jobs: int = 1) -> tuple[int, Pipeline]:
    """Execute one subcommand; returns the exit status and the pipeline state."""
    out.mkdir(parents=True, exist_ok=True)
    p = Pipeline(cfg, out, mesh_level)
    if command == "sweep":
        rows = sweep(cfg, out, mesh_level, jobs)
        p.summary["sweep"] = {"n_points": len(rows), "n_failed": sum(r["status"] != "ok" for r in rows)}
    elif command == "mesh":
        p.stage_mesh()
    elif command == "solve":
        p.stage_solve()
    elif command == "family":
        p.stage_family()
    elif command == "holonomy":
        p.stage_holonomy()
    elif command == "limit":
        p.stage_limit()
    elif command == "beltrami":
        p.stage_beltrami()
    elif command == "reality":
        p.stage_reality()
    elif command == "report":
        p.stage_mesh()
        p.stage_solve()
        p.stage_family()
        hols = p.stage_holonomy()
        if cfg.R > 0 or cfg.family == ZERO_DEGREE:
            p.stage_beltrami()
        p.stage_reality(hols)
        p.stage_limit()
        p.write_plot_script()
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(command)
    failed = [c for c in p.checks if not c.passed]
    p.summary["checks"] = [c.as_dict() for c in p.checks]
    p.summary["config"] = {"family": cfg.family, "c": _cpair(cfg.c), "k": _cpair(cfg.k),
                           "hbar": _cpair(cfg.hbar), "R": cfg.R, "mesh_level": mesh_level,
                           "target_edge_length": cfg.edge_length(mesh_level)}
    _dump(out / f"{command}_summary.json", p.summary)
    return (EXIT_INVARIANT if failed else EXIT_OK), p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conflimit", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="INI file with JSON values")
    ap.add_argument("--out", type=Path, default=None, help="output directory")
    ap.add_argument("--check", default="all", help="'all' or a comma-separated list of: " + ", ".join(CHECKS))
    ap.add_argument("--mesh-level", type=int, default=0, help="halve the edge length N times")
    ap.add_argument("--jobs", type=int, default=1, help="parallel workers for sweep")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg.checks = parse_checks(args.check)
        if args.mesh_level < 0:
            raise ConfigError("--mesh-level must be nonnegative")
        cfg.validate(sweep=args.command == "sweep")
        out = args.out if args.out is not None else Path(cfg.output)
        status, p = run(args.command, cfg, out, args.mesh_level, args.jobs)
    except (ConfigError, InadmissibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, SolverDivergence) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for c in p.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (threshold {c.threshold:.3e}) {c.detail}")
    if status == EXIT_INVARIANT:
        first = next(c for c in p.checks if not c.passed)
        print(f"invariant violated: {first.name}", file=sys.stderr)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
