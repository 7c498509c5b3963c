import math

import numpy as np
import pytest

from mmctune.geometry import (
    Component,
    DesignDomain,
    DesignVector,
    GeometryError,
    design_bounds,
    heaviside,
    heaviside_smooth,
    heaviside_smooth_deriv,
    local_coords,
    parameter_bounds,
    phi_component,
    phi_structure,
    thickness_profile,
)
from conftest import random_component


def make_component(**kw):
    base = dict(x0=1.0, y0=0.5, L=0.4, t1=0.05, t2=0.08, t3=0.05, theta=0.0)
    base.update(kw)
    return Component(**base)


class TestLocalCoords:
    def test_zero_angle_is_translation(self):
        c = make_component(theta=0.0)
        assert local_coords((c.x0 + 0.3, c.y0 + 0.2), c) == pytest.approx((0.3, 0.2))

    def test_quarter_turn(self):
        c = make_component(theta=math.pi / 2)
        xp, yp = local_coords((c.x0 + 1.0, c.y0), c)
        assert xp == pytest.approx(0.0, abs=1e-12)
        assert yp == pytest.approx(-1.0)

    def test_against_matrix_oracle(self):
        c = make_component(x0=1.0, y0=0.5, theta=math.pi / 6)
        point = (1.3, 0.7)
        R = np.array([
            [math.cos(c.theta), math.sin(c.theta)],
            [-math.sin(c.theta), math.cos(c.theta)],
        ])
        expected = R @ np.array([point[0] - c.x0, point[1] - c.y0])
        got = local_coords(point, c)
        np.testing.assert_allclose(got, expected, rtol=1e-14)

    def test_roundtrip(self, rng):
        for _ in range(20):
            c = random_component(rng)
            p = (rng.uniform(0, 2), rng.uniform(0, 1))
            xp, yp = local_coords(p, c)
            ct, st = math.cos(c.theta), math.sin(c.theta)
            back = (c.x0 + ct * xp - st * yp, c.y0 + st * xp + ct * yp)
            np.testing.assert_allclose(back, p, atol=1e-12)


class TestThicknessProfile:
    def test_midpoint_node(self):
        c = make_component(t2=0.08)
        assert thickness_profile(0.0, c) == pytest.approx(0.08)

    def test_constant_profile(self):
        c = make_component(t1=0.07, t2=0.07, t3=0.07)
        for xp in np.linspace(-c.L, c.L, 7):
            assert thickness_profile(xp, c) == pytest.approx(0.07)

    def test_hand_value_and_polyfit_oracle(self):
        c = make_component(L=1.0, t1=0.1, t2=0.2, t3=0.1)
        assert thickness_profile(0.5, c) == pytest.approx(0.175)
        coeffs = np.polyfit([-c.L, 0.0, c.L], [c.t1, c.t2, c.t3], deg=2)
        for xp in np.linspace(-1, 1, 9):
            assert thickness_profile(xp, c) == pytest.approx(np.polyval(coeffs, xp), rel=1e-12)

    def test_interpolates_all_three_nodes(self, rng):
        for _ in range(10):
            c = random_component(rng)
            assert thickness_profile(-c.L, c) == pytest.approx(c.t1)
            assert thickness_profile(0.0, c) == pytest.approx(c.t2)
            assert thickness_profile(c.L, c) == pytest.approx(c.t3)


class TestPhiComponent:
    def test_center_is_one(self):
        c = make_component()
        assert phi_component((c.x0, c.y0), c) == pytest.approx(1.0)

    def test_skeleton_endpoint_on_boundary(self):
        c = make_component(theta=0.7)
        p = (c.x0 + c.L * math.cos(c.theta), c.y0 + c.L * math.sin(c.theta))
        assert phi_component(p, c) == pytest.approx(0.0, abs=1e-10)

    def test_perpendicular_thickness_on_boundary(self):
        c = make_component(theta=0.0)
        assert phi_component((c.x0, c.y0 + c.t2), c) == pytest.approx(0.0, abs=1e-12)

    def test_sign_trichotomy(self, rng):
        for _ in range(200):
            c = random_component(rng)
            p = (rng.uniform(0, 2), rng.uniform(0, 1))
            xp, yp = local_coords(p, c)
            f = thickness_profile(xp, c)
            inside = (xp / c.L) ** 6 + (yp / f) ** 6 < 1.0
            phi = phi_component(p, c)
            assert (phi > 0) == inside

    def test_rotation_equivariance(self, rng):
        # Sample near the component so the field stays O(1) and the absolute
        # tolerance is meaningful.
        for _ in range(30):
            c = random_component(rng)
            offset = rng.uniform(-1.2, 1.2, 2) * np.array([c.L, c.t2])
            p = np.array([c.x0, c.y0]) + offset
            phi0 = phi_component(tuple(p), c)
            a = rng.uniform(-np.pi, np.pi)
            R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            center = np.array([c.x0, c.y0])
            p_rot = center + R @ (p - center)
            c_rot = Component(c.x0, c.y0, c.L, c.t1, c.t2, c.t3, c.theta + a)
            assert phi_component(tuple(p_rot), c_rot) == pytest.approx(phi0, abs=1e-10, rel=1e-10)


class TestPhiStructure:
    def test_singleton_equals_component(self, rng):
        c = random_component(rng)
        d = DesignVector([c])
        p = (0.8, 0.4)
        assert phi_structure(p, d) == phi_component(p, c, d.p)

    def test_point_inside_one_component_positive(self):
        far = make_component(x0=0.2, y0=0.2, L=0.05, t1=0.02, t2=0.02, t3=0.02)
        mid = make_component(x0=1.0, y0=0.5)
        d = DesignVector([far, mid, far])
        assert phi_structure((1.0, 0.5), d) > 0

    def test_matches_bruteforce_max(self, rng):
        comps = [random_component(rng) for _ in range(5)]
        d = DesignVector(comps)
        for _ in range(50):
            p = (rng.uniform(0, 2), rng.uniform(0, 1))
            oracle = max(phi_component(p, c, d.p) for c in comps)
            assert phi_structure(p, d) == oracle

    def test_max_composition_bound(self, rng):
        comps = [random_component(rng) for _ in range(4)]
        d = DesignVector(comps)
        p = (1.1, 0.6)
        phi = phi_structure(p, d)
        values = [phi_component(p, c, d.p) for c in comps]
        assert all(phi >= v for v in values)
        assert any(phi == v for v in values)

    def test_empty_errors(self):
        with pytest.raises(GeometryError):
            phi_structure((0.5, 0.5), DesignVector([]))


class TestHeaviside:
    def test_exact_step_values(self):
        assert heaviside(-0.3) == 0.0
        assert heaviside(0.0) == 0.0
        assert heaviside(0.3) == 1.0

    def test_smooth_midpoint(self):
        for eps, alpha in ((0.1, 1e-3), (2.0, 0.01)):
            assert heaviside_smooth(0.0, eps, alpha) == pytest.approx((1 + alpha) / 2)

    def test_smooth_cubic_value_oracle(self):
        eps, alpha = 0.1, 0.001
        x = eps / 2
        expected = 0.75 * (1 - alpha) * (x / eps - x**3 / (3 * eps**3)) + (1 + alpha) / 2
        assert heaviside_smooth(x, eps, alpha) == pytest.approx(expected, rel=1e-14)
        # Independent evaluation through Horner form of the same cubic.
        t = x / eps
        horner = 0.75 * (1 - alpha) * t * (1 - t * t / 3.0) + (1 + alpha) / 2
        assert heaviside_smooth(x, eps, alpha) == pytest.approx(horner, rel=1e-12)

    def test_smooth_saturation_and_monotone(self):
        eps, alpha = 0.2, 1e-3
        xs = np.linspace(-0.5, 0.5, 201)
        h = heaviside_smooth(xs, eps, alpha)
        assert np.all(np.diff(h) >= 0)
        assert h[0] == alpha and h[-1] == 1.0
        assert heaviside_smooth(-eps, eps, alpha) == pytest.approx(alpha)
        assert heaviside_smooth(eps, eps, alpha) == pytest.approx(1.0)

    def test_smooth_derivative_matches_fd(self):
        eps, alpha = 0.3, 1e-3
        for x in (-0.25, -0.1, 0.0, 0.12, 0.29):
            fd = (heaviside_smooth(x + 1e-7, eps, alpha) - heaviside_smooth(x - 1e-7, eps, alpha)) / 2e-7
            assert heaviside_smooth_deriv(x, eps, alpha) == pytest.approx(fd, abs=1e-6)
        assert heaviside_smooth_deriv(eps + 0.01, eps, alpha) == 0.0
        assert heaviside_smooth_deriv(-eps - 0.01, eps, alpha) == 0.0

    def test_smooth_converges_to_step(self):
        for x in (-0.3, 0.3):
            for eps in (1e-1, 1e-2, 1e-3):
                assert heaviside_smooth(x, eps, 0.0) == pytest.approx(heaviside(x), abs=1e-12)

    def test_eps_errors(self):
        with pytest.raises(GeometryError):
            heaviside_smooth(0.1, 0.0, 1e-3)
        with pytest.raises(GeometryError):
            heaviside_smooth(0.1, -1.0, 1e-3)


class TestDesignVector:
    def test_flatten_roundtrip(self, rng):
        comps = [random_component(rng) for _ in range(3)]
        d = DesignVector(comps)
        flat = d.flatten()
        assert flat.size == 21
        d2 = DesignVector.unflatten(flat)
        np.testing.assert_array_equal(d2.flatten(), flat)

    def test_text_roundtrip_exact(self, rng):
        comps = [random_component(rng) for _ in range(4)]
        d = DesignVector(comps, p=6)
        text = d.to_text()
        assert text.startswith("mmc-design v1 n=4 p=6")
        d2 = DesignVector.from_text(text)
        np.testing.assert_array_equal(d2.flatten(), d.flatten())
        assert d2.p == d.p

    def test_text_rejects_garbage(self):
        with pytest.raises(GeometryError):
            DesignVector.from_text("not a design\n1 2 3")

    def test_validate_rejects_bad_fields(self):
        with pytest.raises(GeometryError):
            make_component(L=-1.0).validate()
        with pytest.raises(GeometryError):
            make_component(t2=0.0).validate()

    def test_validate_rejects_dipping_profile(self):
        c = make_component(L=1.0, t1=0.01, t2=0.011, t3=0.3)
        xs = np.linspace(-c.L, c.L, 10001)
        sampled_min = min(thickness_profile(x, c) for x in xs)
        assert sampled_min < 0  # the quadratic really dips below zero
        assert c.min_thickness() == pytest.approx(sampled_min, abs=1e-6)
        with pytest.raises(GeometryError):
            c.validate()

    def test_validate_accepts_positive_profile(self, rng):
        for _ in range(20):
            c = random_component(rng)
            if c.min_thickness() > 0:
                c.validate()


class TestDomain:
    def test_rectangle_active(self):
        dom = DesignDomain(2.0, 1.0)
        assert bool(dom.active(1.0, 0.5))
        assert not bool(dom.active(2.1, 0.5))
        assert dom.area == 2.0

    def test_cutout_active_and_area(self):
        dom = DesignDomain(1.0, 1.0, cutout=(0.4, 0.6, 1.0, 1.0))
        assert not bool(dom.active(0.7, 0.8))
        assert bool(dom.active(0.2, 0.8))
        assert bool(dom.active(0.7, 0.5))
        assert dom.area == pytest.approx(1.0 - 0.6 * 0.4)

    def test_cutout_validation(self):
        with pytest.raises(GeometryError):
            DesignDomain(1.0, 1.0, cutout=(0.5, 0.5, 1.5, 1.0))
        with pytest.raises(GeometryError):
            DesignDomain(1.0, 1.0, cutout=(0.0, 0.0, 1.0, 1.0))
        with pytest.raises(GeometryError):
            DesignDomain(-1.0, 1.0)

    def test_parameter_bounds_box(self):
        dom = DesignDomain(2.0, 1.0)
        lo, hi = parameter_bounds(dom)
        assert lo.shape == hi.shape == (7,)
        assert np.all(lo < hi)
        assert hi[0] == 2.0 and hi[1] == 1.0
        assert lo[2] == pytest.approx(0.02) and hi[2] == pytest.approx(1.6)
        assert lo[3] == pytest.approx(0.01) and hi[3] == pytest.approx(0.3)
        lo2, hi2 = design_bounds(dom, 3)
        assert lo2.size == 21
        np.testing.assert_array_equal(lo2[7:14], lo)
