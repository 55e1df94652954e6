"""Acceptance criteria 1-10, one test each.

Every test prints a single ``[criterion k] PASS|FAIL: ...`` line (capture is
disabled for that line so it shows up in ``pytest -v`` output).
"""

import time

import numpy as np
import pytest

import manufactured as mms
from stokes_lps.assembly import assemble_blocks, assemble_load, form_eval, h1_seminorm_error
from stokes_lps.eigensolver import (dense_pencil_eigenvalues, discrete_equation_residuals, infsup_global,
                                    solve_smallest)
from stokes_lps.mesh import unit_square_mesh
from stokes_lps.postprocess import expansion_check, postprocess, solve_stokes_source
from stokes_lps.quadrature import DEFAULT_RULE, monomial_integral
from stokes_lps.spaces import ElementKind, ProjectionKind
from stokes_lps.study import StudyConfig, observed_orders, run_study

REF = 52.3446911
LEVELS = (8, 16, 32, 64)


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    cfg = StudyConfig(levels=LEVELS, postprocess="two-space",
                      output_dir=str(tmp_path_factory.mktemp("acceptance")))
    t0 = time.perf_counter()
    table = run_study(cfg)
    return table, time.perf_counter() - t0


@pytest.fixture(scope="module")
def level_pairs():
    """Eigenpairs per level (P1/Zero), with systems, for the identity checks."""
    out = {}
    for n in LEVELS:
        s = assemble_blocks(unit_square_mesh(n))
        out[n] = (s, solve_smallest(s, count=2))
    return out


def test_criterion_01_reference_convergence(study, report):
    table, elapsed = study
    err = table.column("error_lambda_h")
    order = observed_orders(table)["lambda_h"][-1]
    ok = bool(np.all(np.diff(err) < 0)) and abs(order - 2.0) <= 0.3 and elapsed <= 120.0
    report(1, ok, f"errors {np.array2string(err, precision=4)}, last order {order:.3f}, "
                  f"study time {elapsed:.1f}s")


def test_criterion_02_two_space(study, report):
    table, _ = study
    e = table.column("error_lambda_h")
    et = table.column("error_lambda_tilde")
    n = table.column("n")
    order = observed_orders(table)["lambda_tilde"][-1]
    below = bool(np.all(et[n >= 16] <= e[n >= 16]))
    ok = below and order is not None and order >= 2.8
    report(2, ok, f"postprocessed errors {np.array2string(et, precision=4)}, last order {order:.3f}")


def test_criterion_03_two_grid(report):
    coarse = assemble_blocks(unit_square_mesh(8))
    pair = solve_smallest(coarse)[0]
    pp = postprocess(pair, coarse, "two-grid")
    fine = assemble_blocks(unit_square_mesh(64))
    t0 = time.perf_counter()
    direct = solve_smallest(fine)[0]
    t_eig = time.perf_counter() - t0
    e_pp, e_direct = abs(pp.lambda_tilde - REF), abs(direct.lam - REF)
    ok = (pp.system.mesh.n_cells == fine.mesh.n_cells and e_pp <= 3 * e_direct and pp.source_time < t_eig)
    report(3, ok, f"two-grid error {e_pp:.4e} vs direct n=64 {e_direct:.4e} (ratio {e_pp / e_direct:.2f}); "
                  f"source solve {pp.source_time:.2f}s vs eigensolve {t_eig:.2f}s")


def test_criterion_04_dense_oracle(report):
    s = assemble_blocks(unit_square_mesh(4))
    dense = dense_pencil_eigenvalues(s)
    pairs = solve_smallest(s, count=s.n_u)
    got = np.array([p.lam for p in pairs])
    rel = float(np.max(np.abs(got - dense) / np.abs(dense))) if len(got) == len(dense) else np.inf
    res = max(p.residual for p in pairs)
    ok = len(dense) == s.n_u and rel <= 1e-8 and res <= 1e-10
    report(4, ok, f"{len(dense)} finite eigenvalues, max relative deviation {rel:.2e}, max residual {res:.2e}")


def test_criterion_05_discrete_equations(level_pairs, report):
    worst = 0.0
    for n, (s, pairs) in level_pairs.items():
        for pr in pairs:
            worst = max(worst, *discrete_equation_residuals(s, pr))
    p2 = assemble_blocks(unit_square_mesh(16), ElementKind.P2_BUBBLE, proj=ProjectionKind.pdisc(1))
    for pr in solve_smallest(p2, count=2):
        worst = max(worst, *discrete_equation_residuals(p2, pr))
    report(5, worst <= 1e-9, f"largest relative residual of either equation {worst:.2e}")


def test_criterion_06_rayleigh_identity(level_pairs, report):
    worst = 0.0
    for n, (s, pairs) in level_pairs.items():
        for pr in pairs:
            val = (form_eval(s, "a", pr.u, pr.u) - pr.lam * form_eval(s, "r", pr.u, pr.u)
                   + form_eval(s, "S", pr.p, pr.p))
            worst = max(worst, abs(val) / abs(pr.lam))
    report(6, worst <= 1e-10, f"max |a(u,u) - lam r(u,u) + S(p,p)| / lam = {worst:.2e}")


def test_criterion_07_expansion_identity(level_pairs, report):
    s, pairs = level_pairs[16]
    pr = pairs[0]
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        w = s.velocity_function(rng.standard_normal(s.n_u))
        psi = s.pressure_function(rng.standard_normal(s.n_p))
        ec = expansion_check(s, pr, w, psi)
        worst = max(worst, abs(ec.defect) / (abs(ec.lambda_hat) + abs(pr.lam)))
    report(7, worst <= 1e-11, f"max normalized defect over 20 random pairs {worst:.2e}")


def test_criterion_08_quadrature(report):
    xi, eta = DEFAULT_RULE.ref_points.T
    worst = max(abs(DEFAULT_RULE.weights @ (xi**a * eta**b) - monomial_integral(a, b))
                for a in range(9) for b in range(9 - a))
    report(8, worst <= 1e-14, f"max monomial error (a+b <= 8) {worst:.2e}")


def test_criterion_09_infsup(report):
    betas = [infsup_global(assemble_blocks(unit_square_mesh(n))) for n in (4, 8, 16)]
    ratio = min(betas) / max(betas)
    ok = min(betas) > 0 and ratio >= 0.5
    report(9, ok, f"beta_A {np.array2string(np.array(betas), precision=4)}, min/max {ratio:.3f}")


def test_criterion_10_manufactured(report):
    results = {}
    for name, kind, proj in (("P1/Zero", ElementKind.P1, ProjectionKind.zero()),
                             ("P2Bubble/PDisc1", ElementKind.P2_BUBBLE, ProjectionKind.pdisc(1))):
        errs = []
        for n in (8, 16, 32):
            s = assemble_blocks(unit_square_mesh(n), kind, proj=proj)
            u, _, _ = solve_stokes_source(s, assemble_load(s, mms.force))
            errs.append(h1_seminorm_error(u, mms.velocity_grad))
        results[name] = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = (np.all(np.abs(results["P1/Zero"] - 1.0) <= 0.3)
          and np.all(np.abs(results["P2Bubble/PDisc1"] - 2.0) <= 0.3))
    detail = ", ".join(f"{k} orders {np.array2string(v, precision=3)}" for k, v in results.items())
    report(10, bool(ok), detail)
