import numpy as np
import pytest

from nkf import geometry
from nkf.errors import ProjectionFailed
from nkf.geometry import DomainSpec


def make_spec(m=10, seed=3, **kw):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.3, 0.6, size=(m, 2))
    radii = rng.uniform(0.03, 0.09, size=m)
    return DomainSpec(dim=2, centers=centers, radii=radii, **kw)


def single_circle_spec(center=(0.5, 0.5), r=0.1, **kw):
    return DomainSpec(dim=2, centers=np.array([center]), radii=np.array([r]), **kw)


def test_circle_field_values():
    assert geometry.circle_field((0.5, 0.5), (0.5, 0.5), 0.1) == pytest.approx(-0.01)
    assert geometry.circle_field((0.6, 0.5), (0.5, 0.5), 0.1) == pytest.approx(0.0)
    assert geometry.circle_field((0.5, 0.7), (0.5, 0.5), 0.1) == pytest.approx(0.03)


def test_blob_single_circle_matches_negated_field():
    spec = single_circle_spec()
    p = np.array([0.55, 0.52])
    f1 = geometry.circle_field(p, spec.centers[0], spec.radii[0])
    assert geometry.blob_field(p, spec) == pytest.approx(-f1, abs=1e-12)
    # on the circle itself the blend is the sign flip of zero
    assert geometry.blob_field((0.6, 0.5), spec) == pytest.approx(0.0, abs=1e-12)


def test_blob_identical_circles_closed_form():
    c = np.tile([0.4, 0.6], (10, 1))
    spec = DomainSpec(dim=2, centers=c, radii=np.full(10, 0.05))
    p = np.array([0.47, 0.61])
    f1 = geometry.circle_field(p, c[0], 0.05)
    expected = -f1 + np.log(10.0) / 30.0
    assert geometry.blob_field(p, spec) == pytest.approx(expected, rel=1e-12)


def test_blob_sandwich_bound():
    spec = make_spec()
    rng = np.random.default_rng(11)
    p = rng.uniform(-0.1, 1.1, size=(500, 2))
    f_all = np.array(
        [geometry.circle_field(p, c, r) for c, r in zip(spec.centers, spec.radii)]
    )
    neg_min = -f_all.min(axis=0)
    blob = geometry.blob_field(p, spec)
    assert np.all(blob >= neg_min - 1e-12)
    assert np.all(blob <= neg_min + np.log(spec.m) / spec.blend_k + 1e-12)


def test_composite_signs():
    spec = make_spec()
    assert geometry.composite_field((0.1, 0.9), spec) < 0  # fluid interior
    inside_obstacle = spec.centers[0]
    assert geometry.composite_field(inside_obstacle, spec) > 0
    assert geometry.composite_field((1.4, 0.5), spec) > 0  # beyond the square


def test_composite_near_flat_edge_tracks_box_distance():
    spec = make_spec()  # obstacles clustered near the center
    p = np.array([0.5, 1.0])  # flat top edge, far from obstacles
    s = geometry.rounded_box_field(p, spec.corner_radius)
    g = geometry.composite_field(p, spec)
    assert abs(g - s) <= np.log(2.0) / spec.blend_k


def test_rounded_box_exactness():
    # hand distances: flat edge, outside corner, interior
    assert geometry.rounded_box_field((0.5, 1.0), 0.2) == pytest.approx(0.0, abs=1e-15)
    corner = np.array([1.0, 1.0])
    expected = np.linalg.norm(corner - [0.8, 0.8]) - 0.2
    assert geometry.rounded_box_field(corner, 0.2) == pytest.approx(expected)
    assert geometry.rounded_box_field((0.5, 0.5), 0.2) == pytest.approx(-0.5)


def test_wb_cubic_anchor_values():
    eps = 0.05
    vals = geometry._wb_from_field(np.array([0.0, eps / 2, eps]), eps)
    assert vals[0] == pytest.approx(1.0)
    assert vals[1] == pytest.approx(0.0625)
    assert vals[2] == pytest.approx(0.0, abs=1e-15)


def test_wb_range_and_continuity():
    spec = make_spec()
    rng = np.random.default_rng(5)
    p = rng.uniform(-0.05, 1.05, size=(2000, 2))
    wb = geometry.boundary_indicator(p, spec)
    assert np.all((wb >= 0.0) & (wb <= 1.0))
    h = 1e-6 * rng.standard_normal(p.shape)
    h /= np.linalg.norm(h, axis=-1, keepdims=True) * 1e6
    wb2 = geometry.boundary_indicator(p + h, spec)
    assert np.max(np.abs(wb2 - wb)) < 1e-3


def test_mask_matches_band_rules():
    spec = make_spec()
    rng = np.random.default_rng(7)
    p = rng.uniform(-0.05, 1.05, size=(4000, 2))
    g = geometry.composite_field(p, spec)
    wb = geometry.boundary_indicator(p, spec)
    w = geometry.mask(p, spec)
    inside = g < 0
    outer_band = (g >= 0) & (g <= spec.band_eps)
    beyond = g > spec.band_eps
    assert np.all(w[inside] == 1.0)
    assert np.all(w[inside] >= wb[inside])
    assert np.allclose(w[outer_band], wb[outer_band])
    assert np.all(w[beyond] == 0.0)


def test_composite_gradient_matches_finite_differences():
    spec = make_spec()
    rng = np.random.default_rng(17)
    p = rng.uniform(-0.05, 1.05, size=(1000, 2))
    grad = geometry.composite_gradient(p, spec)
    h = 1e-6
    fd = np.empty_like(grad)
    for ax in range(2):
        e = np.zeros(2)
        e[ax] = h
        fd[:, ax] = (
            geometry.composite_field(p + e, spec) - geometry.composite_field(p - e, spec)
        ) / (2 * h)
    denom = np.maximum(np.linalg.norm(grad, axis=-1), np.linalg.norm(fd, axis=-1))
    rel = np.linalg.norm(grad - fd, axis=-1) / np.maximum(denom, 1e-10)
    assert rel.max() < 1e-5, f"max rel err {rel.max():.2e}"


def test_boundary_normal_directions():
    spec = single_circle_spec(center=(0.5, 0.5), r=0.1)
    # just outside the obstacle at angle 0: gradient points into the circle
    n = geometry.boundary_normal((0.62, 0.5), spec)
    assert n == pytest.approx([-1.0, 0.0], abs=1e-9)
    # near the square edge x=1 the box term dominates
    n = geometry.boundary_normal((0.999, 0.5), spec)
    assert n == pytest.approx([1.0, 0.0], abs=1e-6)


def test_boundary_normal_absent_at_degenerate_point():
    spec = single_circle_spec(center=(0.5, 0.5), r=0.1)
    n = geometry.boundary_normal((0.5, 0.5), spec)  # blob gradient vanishes
    assert np.all(np.isnan(n))


def test_project_interior_identity():
    spec = make_spec()
    p = np.array([0.12, 0.85])
    out = geometry.project_to_domain(p, spec)
    assert np.array_equal(out, p)


def test_project_flat_edge_foot_point():
    # obstacle far enough that its blend tail cannot shift the edge
    spec = single_circle_spec(center=(0.3, 0.3), r=0.05)
    out = geometry.project_to_domain(np.array([0.5, 1.03]), spec)
    assert np.linalg.norm(out - [0.5, 1.0]) < 1e-5
    assert geometry.composite_field(out, spec) <= 1e-5


def test_project_contract_on_random_points():
    spec = make_spec()
    rng = np.random.default_rng(23)
    p = rng.uniform(-0.2, 1.2, size=(500, 2))
    out, ok = geometry.project_with_status(p, spec)
    assert ok.all()
    assert np.all(geometry.composite_field(out, spec) <= 1e-5)


def test_project_fails_at_obstacle_center():
    spec = single_circle_spec(center=(0.5, 0.5), r=0.1)
    with pytest.raises(ProjectionFailed):
        geometry.project_to_domain(np.array([0.5, 0.5]), spec)


def test_boundary_point_cloud_lies_on_boundary():
    spec = make_spec()
    cloud = geometry.boundary_point_cloud(spec, resolution=48)
    assert cloud.shape[0] > 50
    g = geometry.composite_field(cloud, spec)
    assert np.max(np.abs(g)) < 1e-8


def test_sample_points_deterministic():
    spec = make_spec()
    a = geometry.sample_points(spec, 64, rng_seed=42)
    b = geometry.sample_points(spec, 64, rng_seed=42)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.mask_w, b.mask_w)
    single = geometry.sample_points(spec, 1, rng_seed=9)
    assert len(single) == 1


def test_sample_points_invariants():
    spec = make_spec()
    s = geometry.sample_points(spec, 5000, rng_seed=1)
    g = geometry.composite_field(s.positions, spec)
    assert np.all(s.mask_w[g < 0] == 1.0)
    assert np.all(s.mask_w[g > spec.band_eps] == 0.0)
    assert np.all((s.band_wb >= 0) & (s.band_wb <= 1))
    has_normal = np.isfinite(s.normals).all(axis=-1)
    assert np.array_equal(has_normal, s.band_wb > 0)
    norms = np.linalg.norm(s.normals[has_normal], axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    # bounds of the sampling box
    eps = spec.band_eps
    assert s.positions.min() >= -eps and s.positions.max() <= 1 + eps


def test_sample_points_monte_carlo_area():
    # Tiny circles tucked in a cut corner leave the rounded square intact;
    # a sharp blend (k=300) keeps the smooth-max area shift negligible.
    rng = np.random.default_rng(2)
    centers = np.array([0.001, 0.001]) + rng.uniform(0, 1e-3, size=(10, 2))
    spec = DomainSpec(dim=2, centers=centers, radii=np.full(10, 1e-3), blend_k=300.0)
    n = 100_000
    s = geometry.sample_points(spec, n, rng_seed=77)
    frac = np.mean(s.mask_w == 1.0)
    cr = spec.corner_radius
    area_square = 1.0 - (4.0 - np.pi) * cr**2
    box_area = (1.0 + 2 * spec.band_eps) ** 2
    p_expected = area_square / box_area
    sigma = np.sqrt(p_expected * (1 - p_expected) / n)
    assert abs(frac - p_expected) < 3 * sigma, (
        f"MC fraction {frac:.5f} vs expected {p_expected:.5f} (3σ={3*sigma:.5f})"
    )


def test_sample_set_indexing():
    spec = make_spec()
    s = geometry.sample_points(spec, 100, rng_seed=0)
    pt = s[0]
    assert pt.position.shape == (2,)
    assert (pt.normal is None) == (pt.band_wb == 0.0)
    sub = s[10:20]
    assert len(sub) == 10


def test_spec_json_round_trip():
    spec = make_spec()
    again = DomainSpec.loads(spec.dumps())
    assert np.array_equal(again.centers, spec.centers)
    assert np.array_equal(again.radii, spec.radii)
    assert again.corner_radius == spec.corner_radius
    assert again.blend_k == spec.blend_k
    assert again.band_eps == spec.band_eps


def test_spec_validation():
    with pytest.raises(ValueError):
        DomainSpec(dim=2, centers=np.zeros((1, 2)), radii=np.array([-0.1]))
    with pytest.raises(ValueError):
        DomainSpec(dim=2, centers=np.array([[np.nan, 0.5]]), radii=np.array([0.1]))
    with pytest.raises(ValueError):
        single_circle_spec(blend_k=0.0)
    with pytest.raises(ValueError):
        single_circle_spec(band_eps=-1.0)


def test_stratified_interior_points():
    spec = make_spec()
    pts = geometry.stratified_interior_points(spec, 500, rng_seed=4)
    assert pts.shape == (500, 2)
    assert np.all(geometry.composite_field(pts, spec) < 0)
    again = geometry.stratified_interior_points(spec, 500, rng_seed=4)
    assert np.array_equal(pts, again)
