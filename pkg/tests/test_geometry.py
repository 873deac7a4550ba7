import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from balayage.geometry import (
    DomainSpec,
    GeometryError,
    boundary_samples,
    cavities,
    equivalent_radius,
    grid_volume,
    rasterize,
    spec_volume,
    surface_area,
    unit_ball_volume,
)

ELLIPSE = DomainSpec.ellipsoid(coefficients=[2.0, 1.0])
ELLIPSOID_112 = DomainSpec.ellipsoid(coefficients=[1.0, 1.0, 2.0])
UNION = DomainSpec.union_of_balls([DomainSpec.ball([-0.7, 0.0], 1.0), DomainSpec.ball([0.7, 0.0], 1.0)])


def test_json_round_trip_for_every_kind():
    specs = [
        DomainSpec.ball([0.1, 0.2], 1.5),
        ELLIPSOID_112,
        DomainSpec.annulus(1.0, 2.0, 3),
        UNION,
    ]
    for spec in specs:
        assert DomainSpec.from_dict(spec.to_dict()) == spec


def test_unknown_keys_and_kinds_are_rejected():
    with pytest.raises(GeometryError):
        DomainSpec.from_dict({"kind": "ball", "dim": 2, "center": [0, 0], "r": 1, "radius": 2})
    with pytest.raises(GeometryError):
        DomainSpec.from_dict({"kind": "torus", "dim": 3})
    with pytest.raises(GeometryError):
        DomainSpec.annulus(2.0, 1.0, 2)
    with pytest.raises(GeometryError):
        DomainSpec.ball([0.0, 0.0], -1.0)


def test_ellipsoid_coefficients_are_reciprocal_semi_axes():
    assert ELLIPSE.radii == (0.5, 1.0)
    np.testing.assert_allclose(ELLIPSOID_112.coefficients, [1.0, 1.0, 2.0])


def test_closed_form_volumes():
    assert spec_volume(DomainSpec.ball([0, 0], 1.0)) == pytest.approx(math.pi)
    assert spec_volume(ELLIPSE) == pytest.approx(math.pi / 2)
    assert spec_volume(DomainSpec.annulus(1.0, 2.0, 3)) == pytest.approx(28 * math.pi / 3)
    assert spec_volume(ELLIPSOID_112) == pytest.approx(4 * math.pi / 3 * 0.5)


def test_union_volume_matches_fine_grid():
    # inclusion-exclusion of one lens against a fine rasterization
    fine = grid_volume(rasterize(UNION, 1024))
    assert spec_volume(UNION) == pytest.approx(fine, abs=2e-4)


def test_ellipse_perimeter_against_elliptic_integral():
    # P = 4 a E(1 - b^2/a^2) with a = 1, b = 1/2
    assert surface_area(ELLIPSE) == pytest.approx(4 * special.ellipe(0.75), rel=1e-12)
    assert surface_area(ELLIPSE) == pytest.approx(4.84422, abs=1e-5)


def test_spheroid_area_against_closed_form():
    spec = DomainSpec.ellipsoid(semi_axes=[1.0, 1.0, 0.5])
    e = math.sqrt(1 - 0.25)
    expected = 2 * math.pi * (1 + (1 - e * e) / e * math.atanh(e))
    assert surface_area(spec) == pytest.approx(expected, rel=1e-9)


def test_union_perimeter_from_arcs():
    alpha = math.acos(0.7)
    assert surface_area(UNION) == pytest.approx(2 * 2 * (math.pi - alpha), rel=1e-12)


def test_equivalent_radius():
    assert equivalent_radius(math.pi, 2) == pytest.approx(1.0)
    assert equivalent_radius(4 * math.pi / 3 * 8, 3) == pytest.approx(2.0)
    with pytest.raises(GeometryError):
        equivalent_radius(0.0, 2)


def test_isoperimetric_ordering_on_closed_forms():
    for spec in (ELLIPSE, ELLIPSOID_112, DomainSpec.annulus(1.0, 2.0, 2), UNION):
        V, P = spec_volume(spec), surface_area(spec)
        assert spec.dim * V / P <= equivalent_radius(V, spec.dim) + 1e-12


@pytest.mark.parametrize("spec", [DomainSpec.ball([0.2, -0.1], 1.0), ELLIPSE, DomainSpec.annulus(1.0, 2.0, 2)])
def test_grid_volume_converges(spec):
    V = spec_volume(spec)
    errs = []
    hs = []
    for res in (32, 128):
        dom = rasterize(spec, res)
        errs.append(abs(grid_volume(dom) - V))
        hs.append(dom.h)
    assert errs[0] <= 2 * surface_area(spec) * hs[0]
    assert errs[1] <= 0.5 * errs[0] or errs[1] <= 1e-4 * V


def test_boundary_samples_lie_on_boundary_with_unit_normals():
    for spec in (ELLIPSE, ELLIPSOID_112, DomainSpec.annulus(1.0, 2.0, 3), UNION):
        pts, nrm = boundary_samples(spec, 64)
        assert np.abs(spec.signed_distance(pts)).max() < 1e-9
        np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-12)
        # outward: stepping along the normal leaves the domain
        assert not spec.contains(pts + 1e-6 * nrm).any()


def test_annulus_samples_cover_both_components():
    pts, _ = boundary_samples(DomainSpec.annulus(1.0, 2.0, 2), 40)
    radii = np.linalg.norm(pts, axis=1)
    assert np.sum(np.isclose(radii, 1.0)) == 40
    assert np.sum(np.isclose(radii, 2.0)) == 40


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.3, 2.0),
    st.floats(0.3, 2.0),
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
)
def test_ellipse_signed_distance_is_one_lipschitz_and_signed(a, b, x):
    spec = DomainSpec.ellipsoid(semi_axes=[a, b])
    p = np.asarray(x)
    q = p + np.array([1e-3, -2e-3])
    d = spec.signed_distance(np.stack([p, q]))
    assert abs(d[0] - d[1]) <= np.linalg.norm(q - p) * (1 + 1e-6)
    assert (d[0] < 0) == bool(spec.contains(p[None])[0]) or abs(d[0]) < 1e-9


def test_rasterize_preconditions():
    with pytest.raises(GeometryError):
        rasterize(DomainSpec.ball([0, 0], 1.0), 8)
    with pytest.raises(GeometryError):
        rasterize(DomainSpec.annulus(1.0, 1.05, 2), 32)
    tangent = DomainSpec.union_of_balls([DomainSpec.ball([-1.0, 0.0], 1.0), DomainSpec.ball([1.0, 0.0], 1.0)])
    with pytest.raises(GeometryError):
        rasterize(tangent, 64)


def test_rasterized_grid_is_padded_and_sized():
    dom = rasterize(ELLIPSE, 64)
    assert max(dom.shape) == 64
    assert not dom.inside[:4].any() and not dom.inside[-4:].any()
    assert dom.inside.sum() * dom.cell_volume == pytest.approx(math.pi / 2, rel=0.05)


def test_cavities_found_only_for_holes():
    ring = [DomainSpec.ball([1.5 * math.cos(t), 1.5 * math.sin(t)], 0.7) for t in np.linspace(0, 2 * np.pi, 9)[:-1]]
    holes = cavities(rasterize(DomainSpec.union_of_balls(ring), 96))
    assert len(holes) == 1
    np.testing.assert_allclose(holes[0], [0.0, 0.0], atol=0.05)
    assert cavities(rasterize(UNION, 64)) == []


def test_unit_ball_volume_values():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
