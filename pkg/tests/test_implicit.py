import numpy as np
import pytest

from conftest import random_primitive
from csflow.boundary import BoundaryCondition
from csflow.chemistry import Mechanism, Reaction
from csflow.errors import NonPhysicalState, ZeroWavespeed
from csflow.grid import compute_metrics, generate_box
from csflow.implicit import (
    assemble_lhs,
    cell_spectral_radii,
    convective_jacobian,
    correct_increment_cs1,
    correct_normalize_cs2,
    dual_time_rhs,
    local_time_step,
    spectral_split,
)
from csflow.lusgs import lusgs_solve
from csflow.mixture import make_primitive, prim_to_cons
from csflow.spatial import directed_flux


def fd_jacobian(q, S, model, rel=1e-7):
    """Central finite-difference d(F.S)/dQ (the independent oracle).

    The step is relative per component; the floor only guards exact zeros.
    """
    n = q.size
    A = np.empty((n, n))
    for c in range(n):
        h = rel * max(abs(q[c]), 1e-9 * abs(q[0]))
        qp = q.copy()
        qm = q.copy()
        qp[c] += h
        qm[c] -= h
        A[:, c] = (directed_flux(qp, S, model) - directed_flux(qm, S, model)) / (2 * h)
    return A


def random_metric(rng):
    S = rng.uniform(-1.0, 1.0, size=3)
    while np.linalg.norm(S) < 0.1:
        S = rng.uniform(-1.0, 1.0, size=3)
    return S


def test_local_time_step_examples():
    lam_inv = np.array([400.0, 0.0, 0.0])
    dtau = local_time_step(lam_inv, np.zeros(3), 0.0, 5.0, 1.0)
    assert dtau == pytest.approx(0.0125, rel=1e-14)
    assert local_time_step(lam_inv, np.zeros(3), 0.0, 10.0, 1.0) == pytest.approx(0.025)
    # source radius three times the flow radius shrinks dtau fourfold
    with_src = local_time_step(lam_inv, np.zeros(3), 1200.0, 5.0, 1.0)
    assert with_src == pytest.approx(0.0125 / 4.0, rel=1e-14)
    with pytest.raises(ZeroWavespeed):
        local_time_step(np.zeros(3), np.zeros(3), 0.0, 5.0, 1.0)


def test_jacobian_fd_agreement_and_homogeneity(air5_model):
    rng = np.random.default_rng(17)
    worst_fd, worst_hom = 0.0, 0.0
    for _ in range(100):
        prim = random_primitive(rng, air5_model)
        S = random_metric(rng)
        q = prim_to_cons(prim, air5_model)
        A = convective_jacobian(prim, S, air5_model)
        A_fd = fd_jacobian(q, S, air5_model)
        scale = np.max(np.abs(A))
        worst_fd = max(worst_fd, np.max(np.abs(A - A_fd)) / scale)
        F = directed_flux(q, S, air5_model)
        worst_hom = max(worst_hom, np.max(np.abs(A @ q - F)) / np.max(np.abs(F)))
    assert worst_fd <= 1e-6
    assert worst_hom <= 1e-10


def test_jacobian_eigenvalues(air5_model):
    rng = np.random.default_rng(21)
    for _ in range(25):
        prim = random_primitive(rng, air5_model)
        S = random_metric(rng)
        A = convective_jacobian(prim, S, air5_model)
        U = float(prim.u @ S)
        cA = float(prim.c) * np.linalg.norm(S)
        expected = np.sort(np.concatenate(([U - cA, U + cA], np.full(3 + air5_model.ns, U))))
        eig = np.linalg.eigvals(A)
        tol = 1e-8 * (abs(U) + cA)
        assert np.max(np.abs(np.imag(eig))) <= tol
        np.testing.assert_allclose(np.sort(np.real(eig)), expected, atol=tol)
        # spectral radius dominance
        assert abs(U) + cA >= np.max(np.abs(eig)) - tol


def test_spectral_split_identities(air5_model):
    rng = np.random.default_rng(33)
    n = 5 + air5_model.ns
    A = rng.standard_normal((n, n))
    Ap, Am = spectral_split(A, 1.0)
    # off-diagonals recombine bit-exactly; the shifted diagonal to 1 ulp
    np.testing.assert_allclose(Ap + Am, A, rtol=1e-15, atol=1e-16)
    Ap, Am = spectral_split(np.zeros((3, 3)), 1.0)
    np.testing.assert_array_equal(Ap, 0.5 * np.eye(3))
    np.testing.assert_array_equal(Am, -0.5 * np.eye(3))
    for _ in range(50):
        prim = random_primitive(rng, air5_model)
        S = random_metric(rng)
        A = convective_jacobian(prim, S, air5_model)
        lam = abs(float(prim.u @ S)) + float(prim.c) * np.linalg.norm(S)
        Ap, Am = spectral_split(A, lam)
        tol = 1e-10 * lam
        assert np.min(np.real(np.linalg.eigvals(Ap))) >= -tol
        assert np.max(np.real(np.linalg.eigvals(Am))) <= tol


def _uniform_operator(model, mode, dims=(4, 4, 1), cfl=5.0, mech=None, seed=None,
                      species_offdiag="symmetrized"):
    grid = compute_metrics(generate_box(1.0, dims))
    Y = np.full(model.ns, 1.0 / model.ns)
    inf = make_primitive(model, rho=1.0, u=(150.0, 40.0, 0.0), T=400.0, Y=Y)
    q = np.broadcast_to(prim_to_cons(inf, model), dims + (model.nvar,)).copy()
    if seed is not None:
        rng = np.random.default_rng(seed)
        q *= 1.0 + 0.05 * rng.random(q.shape)
    from csflow.chemistry import source_jacobian, source_spectral_radius
    from csflow.mixture import cons_to_prim
    prim = cons_to_prim(q, model)
    lam_inv, lam_vis = cell_spectral_radii(prim, grid, model)
    lam_S = source_spectral_radius(source_jacobian(prim, mech, model)) if mech else 0.0
    dtau = local_time_step(lam_inv, lam_vis, lam_S, cfl, grid.J)
    op = assemble_lhs(q, grid, mode, dtau, mech, model,
                      species_offdiag=species_offdiag)
    return grid, q, op


def test_splitting_identity_uniform_freestream(binary_model):
    grid, q, op = _uniform_operator(binary_model, "CI")
    cell = (1, 2, 0)
    lam = op.lam_face[0][1, 2, 0]
    L = op.offdiag_block(cell, 0, 0)   # -A+ at the lower face
    U = op.offdiag_block((0, 2, 0), 0, 1)  # +A- at the same face, seen from the left cell
    np.testing.assert_allclose(-(L + U), lam * np.eye(op.nvar),
                               atol=1e-12 * max(lam, 1.0))


def test_cs_species_diag_example(binary_model):
    # |U| = 100 along i on a unit-cube cell (J = 1), dtau = 0.01, no viscosity:
    # species diagonal = 1/(J dtau) + |U| = 200
    mk = lambda n_, M: dict(name=n_, M=M, cp=1039.0, hf=0.0, Tref=0.0,
                            mu_ref=0.0, T_mu=273.15, S_mu=107.0)
    from csflow.mixture import MixtureModel, SpeciesData
    model = MixtureModel(species=(SpeciesData(**mk("A", 0.028)), SpeciesData(**mk("B", 0.028))),
                         Pr=0.72, Sc=0.7)
    grid = compute_metrics(generate_box((2.0, 1.0, 1.0), (2, 1, 1)))
    inf = make_primitive(model, rho=1.0, u=(100.0, 0.0, 0.0), T=300.0, Y=[0.5, 0.5])
    q = np.broadcast_to(prim_to_cons(inf, model), (2, 1, 1, model.nvar)).copy()
    op = assemble_lhs(q, grid, "CS1", 0.01, None, model)
    np.testing.assert_allclose(op.d_species[0, 0, 0], 200.0, rtol=1e-12)


@pytest.mark.parametrize("mode", ["CI", "CS1", "CS2"])
@pytest.mark.parametrize("with_chem", [False, True])
def test_lusgs_matches_dense_factored_solve(binary_model, mode, with_chem):
    mech = None
    if with_chem:
        mech = Mechanism(reactions=(
            Reaction(np.array([1.0, 0.0]), np.array([0.0, 1.0]), A_f=20.0, b_f=0.0,
                     Ea_f=0.0, backward=(10.0, 0.0, 0.0)),
        ))
    grid, q, op = _uniform_operator(binary_model, mode, dims=(4, 4, 1), mech=mech, seed=5)
    rng = np.random.default_rng(6)
    rhs = rng.standard_normal(q.shape) * 100.0
    dq = lusgs_solve(op, rhs)
    M = op.dense_factored_matrix()
    expect = np.linalg.solve(M, rhs.reshape(-1)).reshape(q.shape)
    scale = np.max(np.abs(expect))
    np.testing.assert_allclose(dq, expect, atol=1e-12 * scale)


@pytest.mark.parametrize("mode", ["CI", "CS1"])
def test_lusgs_paper_offdiag_variant_matches_dense(binary_model, mode):
    grid, q, op = _uniform_operator(binary_model, mode, dims=(3, 2, 2), seed=8,
                                    species_offdiag="paper")
    rng = np.random.default_rng(9)
    rhs = rng.standard_normal(q.shape)
    dq = lusgs_solve(op, rhs)
    expect = np.linalg.solve(op.dense_factored_matrix(), rhs.reshape(-1)).reshape(q.shape)
    np.testing.assert_allclose(dq, expect, atol=1e-12 * np.max(np.abs(expect)))


def test_lusgs_diagonal_system(binary_model):
    # dtau -> 0 makes D dominant and L, U negligible: dQ = J dtau RHS
    grid = compute_metrics(generate_box(1.0, (3, 3, 2)))
    Y = [0.5, 0.5]
    inf = make_primitive(binary_model, rho=1.0, u=(100.0, 0.0, 0.0), T=300.0, Y=Y)
    dims = grid.dims
    q = np.broadcast_to(prim_to_cons(inf, binary_model), dims + (binary_model.nvar,)).copy()
    dtau = np.full(dims, 1e-17)
    op = assemble_lhs(q, grid, "CI", dtau, None, binary_model)
    rng = np.random.default_rng(10)
    rhs = rng.standard_normal(q.shape)
    dq = lusgs_solve(op, rhs)
    expect = grid.J[..., np.newaxis] * dtau[..., np.newaxis] * rhs
    assert np.max(np.abs(dq - expect)) <= 1e-8 * np.max(np.abs(expect))


def test_lusgs_reversal_symmetry():
    # pure-advection case: the split species rows upwind exactly (lambda =
    # |U|), so index reversal combined with a velocity sign flip leaves the
    # sweep result invariant; flow rows stay zero because their RHS is zero
    mkk = lambda n_, M: SpeciesData(name=n_, M=M, cp=1039.0, hf=0.0, Tref=0.0,
                                    mu_ref=0.0, T_mu=273.15, S_mu=107.0)
    from csflow.mixture import MixtureModel, SpeciesData
    model = MixtureModel(species=(SpeciesData(name="A", M=0.028, cp=1039.0, hf=0.0,
                                              Tref=0.0, mu_ref=0.0, T_mu=273.15, S_mu=107.0),
                                  SpeciesData(name="B", M=0.032, cp=918.0, hf=0.0,
                                              Tref=0.0, mu_ref=0.0, T_mu=273.15, S_mu=107.0)),
                         Pr=0.72, Sc=0.7)
    dims = (8, 1, 1)
    grid = compute_metrics(generate_box((1.0, 0.2, 0.2), dims))
    rng = np.random.default_rng(12)
    qf = np.zeros(dims + (model.nvar,))
    qb = np.zeros_like(qf)
    pf = make_primitive(model, rho=1.1, u=(80.0, 0.0, 0.0), T=300.0, Y=[0.4, 0.6])
    pb = make_primitive(model, rho=1.1, u=(-80.0, 0.0, 0.0), T=300.0, Y=[0.4, 0.6])
    qf[..., :] = prim_to_cons(pf, model)
    qb[..., :] = prim_to_cons(pb, model)
    op_f = assemble_lhs(qf, grid, "CS1", 1e-3, None, model)
    op_b = assemble_lhs(qb, grid, "CS1", 1e-3, None, model)
    rhs = np.zeros(qf.shape)
    rhs[..., 5:] = rng.standard_normal(rhs[..., 5:].shape)
    mirror = rhs[::-1].copy()
    dq_f = lusgs_solve(op_f, rhs)
    dq_b = lusgs_solve(op_b, mirror)
    flip = dq_b[::-1].copy()
    np.testing.assert_allclose(dq_f, flip, atol=1e-12 * np.max(np.abs(dq_f)))
    np.testing.assert_array_equal(dq_f[..., :5], 0.0)


def test_correct_increment_cs1_hand_example():
    out = correct_increment_cs1(np.array([0.5, 0.5]), np.array([0.06, 0.03]), 0.1)
    np.testing.assert_allclose(out, [0.565, 0.535], rtol=1e-15)
    assert out.sum() == pytest.approx(1.1, abs=1e-15)


def test_correct_cs1_fixed_points():
    rho_s = np.array([0.3, 0.7])
    out = correct_increment_cs1(rho_s, np.array([0.02, 0.05]), 0.07)
    np.testing.assert_allclose(out, rho_s + [0.02, 0.05], rtol=1e-15)
    out = correct_increment_cs1(rho_s, np.zeros(2), 0.0)
    np.testing.assert_array_equal(out, rho_s)


def test_correct_normalize_cs2_hand_example():
    out = correct_normalize_cs2(np.array([0.5, 0.5]), np.array([0.06, 0.03]), 0.1)
    np.testing.assert_allclose(out, [0.5651376146788991, 0.534862385321101], rtol=1e-15)
    assert out.sum() == pytest.approx(1.1, abs=1e-15)


def test_correct_cs2_consistent_increment_identity():
    rho_s = np.array([0.25, 0.75])
    d = np.array([0.03, 0.05])
    out = correct_normalize_cs2(rho_s, d, float(d.sum()))
    np.testing.assert_allclose(out, rho_s + d, atol=1e-15)


def test_correct_cs2_single_species_degenerate():
    out = correct_normalize_cs2(np.array([1.2]), np.array([0.1]), 0.1)
    np.testing.assert_allclose(out, [1.3], rtol=1e-15)


def test_corrections_raise_on_negative():
    with pytest.raises(NonPhysicalState):
        correct_increment_cs1(np.array([1e-6, 1.0]), np.array([-1e-3, 0.0]), -1e-3)


def test_corrections_no_drift_many_steps():
    rng = np.random.default_rng(14)
    rho_s1 = np.array([0.2, 0.5, 0.3])
    rho_s2 = rho_s1.copy()
    for _ in range(10_000):
        d = 1e-4 * rng.standard_normal(3)
        drho = d.sum() + 1e-5 * rng.standard_normal()
        rho_s1 = correct_increment_cs1(rho_s1, d, drho)
        rho_s2 = correct_normalize_cs2(rho_s2, d, drho)
        for r in (rho_s1, rho_s2):
            Y = r / r.sum()
            assert abs(Y.sum() - 1.0) <= 1e-12


def test_dual_time_rhs_fixed_points(binary_model):
    rng = np.random.default_rng(15)
    shape = (3, 2, 1, binary_model.nvar)
    q = rng.random(shape) + 1.0
    vol = np.ones(shape[:3])
    np.testing.assert_array_equal(dual_time_rhs(np.zeros(shape), q, q, q, 2.0, 0.1, vol), 0.0)
    # theta = 0 backward-Euler fixed point: Q^m = Q^n + J dt (-R)
    R = rng.standard_normal(shape)
    dt = 0.05
    qm = q + dt * (-R) / vol[..., np.newaxis]
    out = dual_time_rhs(R, qm, q, q, 0.0, dt, vol)
    np.testing.assert_allclose(out, 0.0, atol=1e-12 * np.max(np.abs(R)))
    # steady mode
    np.testing.assert_array_equal(dual_time_rhs(R, qm, q, q, 0.0, None, vol), -R)
