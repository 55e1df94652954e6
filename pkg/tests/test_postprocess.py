import numpy as np
import pytest
from numpy.testing import assert_allclose

import manufactured as mms
from stokes_lps.assembly import assemble_blocks, assemble_load, form_eval, h1_seminorm_error
from stokes_lps.eigensolver import rayleigh_quotient, solve_smallest
from stokes_lps.errors import DimensionMismatchError, InvalidArgumentError
from stokes_lps.mesh import refine_uniform, unit_square_mesh
from stokes_lps.postprocess import (auto_two_grid_levels, expansion_check, postprocess, solve_source_enriched,
                                    solve_stokes_source)
from stokes_lps.spaces import ElementKind, ProjectionKind

REF = 52.3446911
P2B, PD1 = ElementKind.P2_BUBBLE, ProjectionKind.pdisc(1)


@pytest.fixture(scope="module")
def coarse8():
    s = assemble_blocks(unit_square_mesh(8))
    return s, solve_smallest(s)[0]


def test_degenerate_enrichment_is_fixed_point(coarse8):
    s, pr = coarse8
    u, p, res = solve_source_enriched(s, s.mesh, pr)
    assert res <= 1e-12
    assert_allclose(u.coefficients, pr.u.coefficients, atol=1e-10)
    assert_allclose(p.coefficients, pr.p.coefficients, atol=1e-10)
    spp = form_eval(s, "S", pr.p, pr.p)
    assert rayleigh_quotient(s, u) == pytest.approx(pr.lam - spp, rel=1e-10)


def test_two_space_improves(coarse8):
    s16 = assemble_blocks(unit_square_mesh(16))
    pr = solve_smallest(s16)[0]
    pp = postprocess(pr, s16, "two-space")
    assert abs(pp.lambda_tilde - REF) < abs(pr.lam - REF)
    assert pp.source_residual <= 1e-9
    assert pp.extra_levels == 0 and pp.system.element is P2B
    assert pp.lambda_tilde == pytest.approx(rayleigh_quotient(pp.system, pp.u_tilde), rel=1e-12)
    assert abs(pp.system.c @ pp.p_tilde.coefficients) < 1e-12 * np.linalg.norm(pp.p_tilde.coefficients)


def test_two_space_residual_n8(coarse8):
    s, pr = coarse8
    assert postprocess(pr, s, "two-space").source_residual <= 1e-9


def test_two_grid_one_level(coarse8):
    s, pr = coarse8
    pp = postprocess(pr, s, "two-grid", levels=1)
    assert pp.extra_levels == 1 and pp.system.mesh.n_cells == 4 * s.mesh.n_cells
    assert abs(pp.lambda_tilde - REF) < abs(pr.lam - REF)


def test_auto_depth():
    assert auto_two_grid_levels(unit_square_mesh(8)) == 3
    assert auto_two_grid_levels(unit_square_mesh(16)) == 4
    assert auto_two_grid_levels(unit_square_mesh(64)) == 4
    assert auto_two_grid_levels(unit_square_mesh(64), max_levels=6) == 6
    assert auto_two_grid_levels(unit_square_mesh(1)) == 1


def test_rejections(coarse8):
    s, pr = coarse8
    with pytest.raises(InvalidArgumentError):
        postprocess(pr, s, "two-grid", levels=0)
    with pytest.raises(InvalidArgumentError):
        postprocess(pr, s, "three-grid")
    p2 = assemble_blocks(unit_square_mesh(4), P2B, proj=PD1)
    pr2 = solve_smallest(p2)[0]
    with pytest.raises(InvalidArgumentError):
        postprocess(pr2, p2, "two-space")
    other = assemble_blocks(unit_square_mesh(4))
    with pytest.raises(InvalidArgumentError):
        postprocess(pr, other, "two-space")
    with pytest.raises(InvalidArgumentError):
        solve_source_enriched(other, other.mesh, pr)
    with pytest.raises(DimensionMismatchError):
        solve_stokes_source(s, np.zeros(3))


def test_expansion_at_eigenpair(coarse8):
    s, pr = coarse8
    ec = expansion_check(s, pr, pr.u, pr.p)
    spp = form_eval(s, "S", pr.p, pr.p)
    assert ec.lhs == pytest.approx(-spp, abs=1e-12)
    assert ec.rhs == pytest.approx(-spp, abs=1e-12)
    assert abs(ec.defect) <= 1e-12


def test_expansion_random(coarse8):
    s, pr = coarse8
    rng = np.random.default_rng(11)
    for _ in range(20):
        w = s.velocity_function(rng.standard_normal(s.n_u))
        psi = s.pressure_function(rng.standard_normal(s.n_p))
        ec = expansion_check(s, pr, w, psi)
        assert abs(ec.defect) <= 1e-11 * (abs(ec.lambda_hat) + abs(pr.lam))


def test_expansion_with_exact_pressure(coarse8):
    # psi = p_h: the b(w, psi) defect term is carried explicitly
    s, pr = coarse8
    rng = np.random.default_rng(12)
    w = s.velocity_function(s.restrict_velocity(pr.u) + 0.1 * rng.standard_normal(s.n_u))
    ec = expansion_check(s, pr, w, pr.p)
    e = s.velocity_function(s.restrict_velocity(w) - s.restrict_velocity(pr.u))
    r = form_eval(s, "r", w, w)
    orth = form_eval(s, "b", w, pr.p) + form_eval(s, "S", pr.p, pr.p)
    expect = (form_eval(s, "a", e, e) - pr.lam * form_eval(s, "r", e, e)
              - form_eval(s, "S", pr.p, pr.p) + 2 * orth) / r
    assert ec.rhs == pytest.approx(expect, rel=1e-12)
    assert ec.orthogonality_defect == pytest.approx(orth, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        expansion_check(s, pr, w * 0.0, pr.p)


@pytest.mark.parametrize("kind,proj,order", [(ElementKind.P1, ProjectionKind.zero(), 1.0), (P2B, PD1, 2.0)])
def test_manufactured_orders(kind, proj, order):
    errs = []
    for n in (8, 16, 32):
        s = assemble_blocks(unit_square_mesh(n), kind, proj=proj)
        u, p, res = solve_stokes_source(s, assemble_load(s, mms.force))
        assert res <= 1e-9
        errs.append(h1_seminorm_error(u, mms.velocity_grad))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert_allclose(rates, order, atol=0.3)


def test_manufactured_forcing_consistent():
    # finite-difference check of the hand-derived forcing
    x, y, h = 0.31, 0.67, 1e-4
    u = lambda a, b: np.array(mms.velocity(a, b))
    lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h**2
    assert_allclose(np.array(mms.force(x, y)), -lap + [1.0, 0.0], atol=1e-6)
    div = (u(x + h, y)[0] - u(x - h, y)[0] + u(x, y + h)[1] - u(x, y - h)[1]) / (2 * h)
    assert abs(div) < 1e-9
