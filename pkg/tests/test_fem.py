import numpy as np
import pytest

from mmctune.fem import (
    FemError,
    FieldConfig,
    MaterialModel,
    Mesh,
    SingularStateError,
    argmax_tie_variables,
    assemble_and_solve,
    element_density,
    element_energies,
    element_stiffness,
    export_density_csv,
    make_mesh,
    sensitivities,
)
from mmctune.geometry import Component, DesignDomain, DesignVector, design_bounds, heaviside_smooth
from mmctune.workbench import cantilever_case
from conftest import random_component


def lk_reference(E=1.0, nu=0.3):
    """Classic analytic plane-stress stiffness for a square bilinear quad."""
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    return E / (1 - nu**2) * np.array([
        [k[0], k[1], k[2], k[3], k[4], k[5], k[6], k[7]],
        [k[1], k[0], k[7], k[6], k[5], k[4], k[3], k[2]],
        [k[2], k[7], k[0], k[5], k[6], k[3], k[4], k[1]],
        [k[3], k[6], k[5], k[0], k[7], k[2], k[1], k[4]],
        [k[4], k[5], k[6], k[7], k[0], k[1], k[2], k[3]],
        [k[5], k[4], k[3], k[2], k[1], k[0], k[7], k[6]],
        [k[6], k[3], k[4], k[1], k[2], k[7], k[0], k[5]],
        [k[7], k[2], k[1], k[4], k[3], k[6], k[5], k[0]],
    ])


class TestElementStiffness:
    def test_square_matches_analytic(self):
        for h in (1.0, 0.025):
            ke = element_stiffness(h, h, 1.0, 0.3)
            np.testing.assert_allclose(ke, lk_reference(1.0, 0.3), atol=1e-12)

    def test_rigid_body_nullspace(self):
        hx, hy = 0.4, 0.25
        ke = element_stiffness(hx, hy, 2.0, 0.25)
        tx = np.tile([1.0, 0.0], 4)
        ty = np.tile([0.0, 1.0], 4)
        coords = np.array([[0, 0], [hx, 0], [hx, hy], [0, hy]], dtype=float)
        rot = np.column_stack([-coords[:, 1], coords[:, 0]]).ravel()
        for mode in (tx, ty, rot):
            np.testing.assert_allclose(ke @ mode, 0.0, atol=1e-12)

    def test_symmetric_psd(self):
        ke = element_stiffness(0.3, 0.7, 1.0, 0.3)
        np.testing.assert_allclose(ke, ke.T, atol=1e-14)
        eig = np.linalg.eigvalsh(ke)
        assert eig[0] > -1e-12
        assert np.sum(np.abs(eig) < 1e-12) == 3  # exactly the rigid modes

    def test_fine_quadrature_oracle(self):
        hx, hy, E, nu = 0.37, 0.21, 1.7, 0.29
        D = E / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
        xi_n = np.array([-1.0, 1.0, 1.0, -1.0])
        eta_n = np.array([-1.0, -1.0, 1.0, 1.0])
        pts, wts = np.polynomial.legendre.leggauss(10)
        ke = np.zeros((8, 8))
        for xi, wx in zip(pts, wts):
            for eta, wy in zip(pts, wts):
                dN_dx = 0.25 * xi_n * (1 + eta * eta_n) * 2 / hx
                dN_dy = 0.25 * eta_n * (1 + xi * xi_n) * 2 / hy
                B = np.zeros((3, 8))
                B[0, 0::2] = dN_dx
                B[1, 1::2] = dN_dy
                B[2, 0::2] = dN_dy
                B[2, 1::2] = dN_dx
                ke += wx * wy * B.T @ D @ B * (hx * hy / 4)
        np.testing.assert_allclose(element_stiffness(hx, hy, E, nu), ke, rtol=1e-12)


def one_element_mesh():
    # Unit square, single element.  Nodes: 0=(0,0), 1=(1,0), 2=(0,1), 3=(1,1).
    # Left edge ux = 0, bottom edge uy = 0; unit traction on the right edge.
    fixed = [2 * 0 + 0, 2 * 2 + 0, 2 * 0 + 1, 2 * 1 + 1]
    loads = [(1, 0, 0.5), (3, 0, 0.5)]
    return Mesh(nx=1, ny=1, hx=1.0, hy=1.0, active=np.ones((1, 1), bool),
                fixed_dofs=np.array(fixed), loads=loads)


class TestAssembleAndSolve:
    def test_uniaxial_patch(self):
        mesh = one_element_mesh()
        mat = MaterialModel(E=1.0, nu=0.3, q=2)
        sol = assemble_and_solve(np.ones((1, 1)), mesh, mat)
        u = sol.u.reshape(4, 2)
        # Plane stress: eps_x = sigma/E, eps_y = -nu sigma/E.
        np.testing.assert_allclose(u[1, 0], 1.0, atol=1e-10)
        np.testing.assert_allclose(u[3, 0], 1.0, atol=1e-10)
        np.testing.assert_allclose(u[2, 1], -0.3, atol=1e-10)
        np.testing.assert_allclose(u[3, 1], -0.3, atol=1e-10)
        assert sol.compliance == pytest.approx(1.0, abs=1e-10)

    def test_linearity_in_youngs_modulus(self):
        mesh = one_element_mesh()
        s1 = assemble_and_solve(np.ones((1, 1)), mesh, MaterialModel(E=1.0))
        s2 = assemble_and_solve(np.ones((1, 1)), mesh, MaterialModel(E=2.0))
        np.testing.assert_allclose(s2.u, s1.u / 2.0, atol=1e-12)
        assert s2.compliance == pytest.approx(s1.compliance / 2.0)

    def test_mirror_symmetry(self):
        # Fixed left edge, x-direction load at the right-edge midline node.
        case = cantilever_case(nx=8, ny=4)
        mesh = case.build_mesh()
        mid = 2 * (8 + 1) + 8
        mesh.loads = [(mid, 0, 1.0)]
        rng = np.random.default_rng(0)
        rho = rng.uniform(0.2, 1.0, size=(4, 8))
        rho = 0.5 * (rho + rho[::-1])  # mirror-symmetric about the midline
        sol = assemble_and_solve(rho, mesh, case.material)
        u = sol.u.reshape(5, 9, 2)
        np.testing.assert_allclose(u[:, :, 0], u[::-1, :, 0], atol=1e-9)
        np.testing.assert_allclose(u[:, :, 1], -u[::-1, :, 1], atol=1e-9)

    def test_self_adjoint_energy_identity(self):
        case = cantilever_case(nx=10, ny=5)
        mesh = case.build_mesh()
        rho = np.random.default_rng(3).uniform(0.3, 1.0, size=(5, 10))
        sol = assemble_and_solve(rho, mesh, case.material)
        energies = element_energies(sol, mesh, case.material)
        utku = float(np.sum(rho.ravel() ** case.material.q * energies))
        assert utku == pytest.approx(sol.compliance, rel=1e-10)

    def test_zero_load_zero_compliance(self):
        mesh = one_element_mesh()
        mesh.loads = []
        sol = assemble_and_solve(np.ones((1, 1)), mesh, MaterialModel())
        assert sol.compliance == 0.0

    def test_volume_skips_penalization(self):
        case = cantilever_case(nx=6, ny=3)
        mesh = case.build_mesh()
        mat = MaterialModel(E=1.0, nu=0.3, q=2)
        half = assemble_and_solve(np.full((3, 6), 0.5), mesh, mat)
        full = assemble_and_solve(np.ones((3, 6)), mesh, mat)
        assert half.volume_fraction == pytest.approx(0.5)
        assert full.volume_fraction == pytest.approx(1.0)
        # stiffness scales by rho^q = 0.25, so displacements scale by 4
        assert half.compliance == pytest.approx(4.0 * full.compliance, rel=1e-9)

    def test_checkerboard_volume(self):
        case = cantilever_case(nx=2, ny=2)
        mesh = case.build_mesh()
        alpha = 1e-3
        rho = np.array([[alpha, 1.0], [1.0, alpha]])
        sol = assemble_and_solve(rho, mesh, MaterialModel())
        assert sol.volume_fraction == pytest.approx((1 + alpha) / 2)

    def test_monotone_compliance_under_density_growth(self):
        case = cantilever_case(nx=10, ny=5)
        mesh = case.build_mesh()
        rng = np.random.default_rng(9)
        for _ in range(3):
            rho = rng.uniform(0.05, 0.8, size=(5, 10))
            c1 = assemble_and_solve(rho, mesh, case.material).compliance
            c2 = assemble_and_solve(np.clip(rho + 0.2, 0, 1), mesh, case.material).compliance
            assert c2 <= c1 + 1e-9

    def test_singular_system_raises(self):
        mesh = one_element_mesh()
        with pytest.raises(SingularStateError):
            assemble_and_solve(np.zeros((1, 1)), mesh, MaterialModel())

    def test_empty_dirichlet_rejected(self):
        with pytest.raises(FemError):
            Mesh(nx=1, ny=1, hx=1.0, hy=1.0, active=np.ones((1, 1), bool),
                 fixed_dofs=np.array([], dtype=np.int64), loads=[])


class TestElementDensity:
    def test_full_cover_component_saturates(self):
        # eps below the interior plateau so the projection saturates at 1.
        case = cantilever_case(nx=8, ny=4)
        mesh = case.build_mesh()
        cfg = FieldConfig(eps=0.5)
        giant = Component(x0=1.0, y0=0.5, L=10.0, t1=5.0, t2=5.0, t3=5.0, theta=0.0)
        dens = element_density(DesignVector([giant]), mesh, cfg)
        np.testing.assert_allclose(dens.rho, 1.0, atol=1e-12)

    def test_empty_design_floors_at_alpha(self):
        case = cantilever_case(nx=8, ny=4)
        mesh = case.build_mesh()
        cfg = FieldConfig(eps=2.0, alpha=1e-3)
        tiny_far = Component(x0=1.9, y0=0.95, L=0.02, t1=0.005, t2=0.005, t3=0.005, theta=0.0)
        dens = element_density(DesignVector([tiny_far]), mesh, cfg)
        assert dens.rho.min() == pytest.approx(1e-3)
        assert np.isclose(dens.rho, 1e-3).sum() > 20  # far field floored

    def test_corner_average_rule(self, rng):
        case = cantilever_case(nx=5, ny=3)
        mesh = case.build_mesh()
        cfg = FieldConfig(eps=2.0, alpha=1e-3)
        d = DesignVector([random_component(rng) for _ in range(3)])
        dens = element_density(d, mesh, cfg)
        h = heaviside_smooth(dens.phi, cfg.eps, cfg.alpha).reshape(4, 6)
        for ey in range(3):
            for ex in range(5):
                want = 0.25 * (h[ey, ex] + h[ey, ex + 1] + h[ey + 1, ex + 1] + h[ey + 1, ex])
                assert dens.rho[ey, ex] == pytest.approx(want, rel=1e-14)

    def test_straddling_element_formula(self):
        eps, alpha = 0.7, 1e-3
        values = np.array([-2 * eps, 0.0, eps, 2 * eps])
        rho = heaviside_smooth(values, eps, alpha).mean()
        assert rho == pytest.approx((alpha + (1 + alpha) / 2 + 1.0 + 1.0) / 4)


class TestSensitivities:
    def test_dead_component_has_zero_gradient(self):
        case = cantilever_case(nx=10, ny=5)
        mesh = case.build_mesh()
        cfg = FieldConfig(eps=2.0)
        live = Component(1.0, 0.5, 0.6, 0.2, 0.2, 0.2, 0.0)
        dead = Component(1.9, 0.05, 0.02, 0.01, 0.01, 0.01, 0.0)  # phi < -eps at all nodes
        d = DesignVector([live, dead])
        dens = element_density(d, mesh, cfg)
        sol = assemble_and_solve(dens.rho, mesh, case.material)
        dC, dV = sensitivities(d, mesh, case.material, cfg, sol, dens)
        np.testing.assert_array_equal(dC[7:], 0.0)
        np.testing.assert_array_equal(dV[7:], 0.0)
        assert np.any(dC[:7] != 0.0)

    def test_growing_length_adds_material(self):
        case = cantilever_case(nx=10, ny=5)
        mesh = case.build_mesh()
        cfg = case.field_config()
        lone = Component(1.0, 0.5, 0.4, 0.1, 0.1, 0.1, 0.0)
        d = DesignVector([lone])
        dens = element_density(d, mesh, cfg)
        sol = assemble_and_solve(dens.rho, mesh, case.material)
        _, dV = sensitivities(d, mesh, case.material, cfg, sol, dens)
        assert dV[2] > 0.0  # dV/dL

    def test_matches_finite_differences(self):
        case = cantilever_case(nx=20, ny=10)
        mesh = case.build_mesh()
        cfg = case.field_config()
        rng = np.random.default_rng(5)
        lo, hi = design_bounds(case.domain, 4)

        def full(x):
            dens = element_density(x, mesh, cfg)
            sol = assemble_and_solve(dens.rho, mesh, case.material)
            return sol.compliance, sol.volume_fraction

        h = 1e-5
        checked = 0
        while checked < 4:
            x = rng.uniform(lo, hi)
            try:
                dens = element_density(x, mesh, cfg)
                sol = assemble_and_solve(dens.rho, mesh, case.material)
            except SingularStateError:
                continue
            if sol.compliance > 1e4:
                continue
            dC, dV = sensitivities(x, mesh, case.material, cfg, sol, dens)
            ties = argmax_tie_variables(dens, x, mesh, cfg)
            for j in range(x.size):
                if ties[j]:
                    continue
                xp = x.copy(); xp[j] += h
                xm = x.copy(); xm[j] -= h
                try:
                    cp, vp = full(xp)
                    cm, vm = full(xm)
                except SingularStateError:
                    continue
                floor_c = 3e-9 * max(abs(cp), abs(cm)) / h
                assert abs(dC[j] - (cp - cm) / (2 * h)) <= max(
                    1e-3 * max(abs(dC[j]), abs((cp - cm) / (2 * h))), floor_c)
                assert abs(dV[j] - (vp - vm) / (2 * h)) <= max(
                    1e-3 * max(abs(dV[j]), abs((vp - vm) / (2 * h))), 1e-12 / h)
            checked += 1


class TestMeshAndExport:
    def test_lshape_active_count(self):
        dom = DesignDomain(1.0, 1.0, cutout=(0.4, 0.6, 1.0, 1.0))
        mesh = make_mesh(dom, 80, 80, fixed_dofs=np.array([0]), loads=[])
        assert mesh.n_active == 4864

    def test_density_csv_row0_top(self):
        case = cantilever_case(nx=3, ny=2)
        mesh = case.build_mesh()
        rho = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])  # row 0 = bottom internally
        csv = export_density_csv(rho, mesh)
        first = [float(t) for t in csv.splitlines()[0].split(",")]
        assert first == [0.4, 0.5, 0.6]

    def test_material_validation(self):
        with pytest.raises(FemError):
            MaterialModel(E=-1.0).validate()
        with pytest.raises(FemError):
            MaterialModel(nu=0.5).validate()
        with pytest.raises(FemError):
            MaterialModel(q=1).validate()
