"""Shared meshes and solved fields (built once per session)."""
from __future__ import annotations

import functools

import pytest

from conflimit.higgs import HiggsData
from conflimit.surface import build_octagon_surface, triangulate
from conflimit.vortex import solve_vortex

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def mesh_at(h: float, circumradius: float = 1.0):
    return triangulate(build_octagon_surface(circumradius), h)


@functools.lru_cache(maxsize=None)
def solved(h: float, family: str, c: complex = 0.0, k: complex = 1.0, R: float = 1.0):
    data = HiggsData.hitchin(c) if family == "hitchin" else HiggsData.zero_degree(k, c)
    field, report = solve_vortex(mesh_at(h), data, R)
    assert report.converged, report.message
    return field


@pytest.fixture(scope="session")
def surface():
    return build_octagon_surface(1.0)


@pytest.fixture(scope="session")
def coarse():
    return mesh_at(0.05)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
