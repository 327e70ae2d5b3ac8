import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from conftest import box_cloud, slab
from placekit.errors import DegenerateObject, TooSparse, VocabularyMissing
from placekit.fpfh import (
    FPFH_DIM,
    N_BINS,
    BowVocabulary,
    bow_histogram,
    estimate_normals,
    fpfh_signatures,
    pair_features,
)
from placekit.geometry import (
    Placement,
    PointCloud,
    Rotation,
    covariance_eigenvalues,
    octahedral_rotations,
    sample_placements,
    transform_cloud,
)
from placekit.semantic import (
    GROUPS,
    color_histogram,
    curvature_histogram,
    overall_shape,
    rgb_to_hsv,
    semantic_vector,
    surface_variation,
)
from placekit.stability import (
    StabilityConfig,
    StabilityFeaturizer,
    caging_features,
    caging_zones,
    placement_histograms,
    stability_vector,
    supporting_contacts,
)
from placekit.zernike import moment_indices, zernike_descriptor


def tube(radius, z0, z1, step=0.003, cx=0.0, cy=0.0):
    n = max(8, int(2 * math.pi * radius / step))
    a = np.linspace(0, 2 * math.pi, n, endpoint=False)
    zs = np.arange(z0, z1 + 1e-12, step)
    aa, zz = np.meshgrid(a, zs)
    return np.column_stack([cx + radius * np.cos(aa).ravel(), cy + radius * np.sin(aa).ravel(),
                            zz.ravel()])


# --------------------------------------------------------------------------- #
# stability: configuration
# --------------------------------------------------------------------------- #


def test_named_configs_have_documented_lengths():
    assert StabilityConfig.named("single145").length == 145
    assert StabilityConfig.named("multi178").length == 178
    with pytest.raises(ValueError):
        StabilityConfig("single145", n_r=2)
    with pytest.raises(ValueError):
        StabilityConfig.named("other")


# --------------------------------------------------------------------------- #
# stability: supporting contacts
# --------------------------------------------------------------------------- #


def test_flush_contact_on_slab():
    obj = PointCloud(slab(0.1, 0.005, z=0.0).points)
    base = slab(0.3, 0.005, z=0.0)
    f = supporting_contacts(obj, base)
    assert abs(f[0]) < 1e-6
    assert f[9] == pytest.approx(1.0, abs=0.05)


def test_hover_height_is_falling_distance():
    base = slab(0.3, 0.005)
    for h in (0.01, 0.05, 0.123):
        obj = PointCloud(box_cloud(z0=h).points)
        assert supporting_contacts(obj, base)[0] == pytest.approx(h, abs=1e-6)


def _signed_distance(hull_xy, p):
    verts = hull_xy
    d = np.inf
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        t = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
        d = min(d, np.linalg.norm(a + t * (b - a) - p))
    edges = zip(verts, np.roll(verts, -1, axis=0))
    inside = all((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0 for a, b in edges)
    return d if inside else -d


def _contacts_oracle(P, B, config):
    """The 12 contact features by exhaustive search and a full sort."""
    gaps = np.full(len(B), np.inf)
    for j, b in enumerate(B):
        under = np.linalg.norm(P[:, :2] - b[:2], axis=1) <= config.contact_radius
        if under.any():
            gaps[j] = P[under, 2].min() - b[2]
    order = sorted(range(len(B)), key=lambda j: (gaps[j], j))
    order = [j for j in order if np.isfinite(gaps[j])]
    k = min(max(math.ceil(config.contact_fraction * len(B)), config.min_contacts),
            config.max_contacts, len(order))
    cut = gaps[order[k - 1]] + 1e-6
    X = B[[j for j in order if gaps[j] <= cut]]
    com = P[:, :2].mean(axis=0)
    lam = np.sort(np.linalg.eigvalsh(np.cov(X.T, bias=True)))[::-1].clip(0)
    hull = ConvexHull(X[:, :2])
    obj_hull = ConvexHull(P[:, :2])
    plane = X[:, 2].max()
    return np.array([
        min(gaps[j] for j in order[:k]),
        ((X[:, :2] - X[:, :2].mean(axis=0)) ** 2).sum(axis=1).mean(),
        X[:, 2].var(),
        lam[0], lam[1], lam[2], lam[1] / lam[0], lam[2] / lam[1],
        _signed_distance(X[hull.vertices, :2], com),
        hull.volume / obj_hull.volume,
        np.mean(P[:, 2] < plane - 1e-6),
        np.mean(P[:, 2] > plane + 1e-6),
    ])


def test_contacts_match_exhaustive_sort(plate, rack):
    config = StabilityConfig.named("single145")
    pool = sample_placements(plate, rack, 0.06, octahedral_rotations()[:6], seed=1)
    for p in pool[::7][:6]:
        P = p.apply(plate).points
        got = supporting_contacts(PointCloud(P), rack, config=config)
        np.testing.assert_allclose(got, _contacts_oracle(P, rack.points, config), atol=1e-9)


def test_no_contacts_gives_sentinels():
    base = slab(0.1, 0.01)
    obj = PointCloud(box_cloud().points + [5.0, 5.0, 0.0])
    f = supporting_contacts(obj, base)
    assert f[0] == StabilityConfig().max_gap
    assert f[8] < 0 and f[9] == 0
    assert np.all(np.isfinite(f))


# --------------------------------------------------------------------------- #
# stability: caging
# --------------------------------------------------------------------------- #


def test_pen_in_holder_is_caged():
    pen = PointCloud(np.vstack([tube(0.01, 0.002, 0.14), [[0, 0, 0.002]]]))
    holder = PointCloud(np.vstack([tube(0.013, 0.0, 0.09), slab(0.026, 0.003).points]))
    heights, gaps = caging_zones(pen, holder, StabilityConfig.named("single145"))
    assert np.all(gaps[1] < 0.013)
    H = caging_features(pen, holder, StabilityConfig.named("multi178"))
    assert H.shape == (4,) and np.all(H > 0)


def test_flat_slab_has_no_caging_gaps():
    config = StabilityConfig.named("single145")
    obj = PointCloud(box_cloud(z0=0.0).points)
    f = caging_features(obj, slab(1.0, 0.01), config)
    assert f.shape == (37,)
    np.testing.assert_array_equal(f[9:21], config.max_gap)


def test_height_histogram_survives_rotation_about_object_axis(plate, rack):
    config = StabilityConfig.named("single145")
    p = sample_placements(plate, rack, 0.06, octahedral_rotations()[:4], seed=2)[5]
    placed = p.apply(plate)
    axis = placed.points[:, :2].mean(axis=0)
    ref = caging_features(placed, rack, config)[21:]
    rng = np.random.default_rng(0)
    for _ in range(10):
        rot = Rotation.about_z(rng.uniform(0, 2 * np.pi))
        pts = rot.apply(rack.points - [axis[0], axis[1], 0]) + [axis[0], axis[1], 0]
        got = caging_features(placed, PointCloud(pts), config)[21:]
        np.testing.assert_allclose(got, ref, atol=1e-6)
    # the polar axis points at the highest point, so the maximum sits in sector 0
    H = ref.reshape(config.n_r, config.n_theta)
    assert H.max() == H[:, 0].max()


# --------------------------------------------------------------------------- #
# stability: cylindrical histograms
# --------------------------------------------------------------------------- #


def _naive_histogram(points, center, radius, z0, height, n_z, n_rho):
    counts = np.zeros((n_z, n_rho))
    snap = 1e-9
    for p in points:
        rho = math.hypot(p[0] - center[0], p[1] - center[1]) / radius * n_rho + snap
        z = (p[2] - z0) / height * n_z + snap
        for i in range(n_z):
            for j in range(n_rho):
                if i <= z < i + 1 and j <= rho < j + 1:
                    counts[i, j] += 1
    return counts


@pytest.mark.parametrize("variant", ["single145", "multi178"])
def test_histograms_match_naive_binning(plate, rack, variant):
    config = StabilityConfig.named(variant)
    p = sample_placements(plate, rack, 0.08, octahedral_rotations()[:3], seed=3)[4]
    placed = p.apply(plate)
    P = placed.points
    c = P.mean(axis=0)
    radius = np.sqrt(((P[:, :2] - c[:2]) ** 2).sum(axis=1)).max() * config.n_rho / (config.n_rho - 2)
    height = np.ptp(P[:, 2]) * config.n_z / (config.n_z - 2)
    z0 = c[2] - height / 2
    cells = config.n_z * config.n_rho
    got = placement_histograms(placed, rack, config)
    args = (c, radius, z0, height, config.n_z, config.n_rho)
    np.testing.assert_array_equal(got[:cells], _naive_histogram(P, *args).ravel())
    np.testing.assert_array_equal(got[cells:2 * cells], _naive_histogram(rack.points, *args).ravel())


def test_empty_environment_saturates_ratios():
    config = StabilityConfig.named("single145")
    obj = box_cloud()
    h = placement_histograms(obj, PointCloud([[9.0, 9.0, 9.0]]), config)
    obj_block, env_block, ratio = np.split(h, 3)
    assert np.all(env_block == 0)
    np.testing.assert_array_equal(ratio[obj_block > 0], config.ratio_cap)
    np.testing.assert_array_equal(ratio[obj_block == 0], 0)


def test_identical_clouds_give_identical_blocks():
    obj = box_cloud()
    h = placement_histograms(obj, obj, StabilityConfig.named("multi178"))
    a, b = np.split(h, 2)
    np.testing.assert_array_equal(a, b)


def test_flat_object_is_degenerate():
    with pytest.raises(DegenerateObject):
        placement_histograms(slab(0.1, 0.01), slab(0.3, 0.01))


def test_stability_vector_is_deterministic_and_finite(plate, rack):
    for variant in ("single145", "multi178"):
        config = StabilityConfig.named(variant)
        for p in sample_placements(plate, rack, 0.1, octahedral_rotations(), seed=4)[::11]:
            a = stability_vector(plate, rack, p, config)
            b = stability_vector(plate, rack, p, config)
            assert a.values.tobytes() == b.values.tobytes()
            assert len(a.values) == config.length and np.all(np.isfinite(a.values))
            assert sum(len(v) for v in a.blocks().values()) == config.length


def test_featurizer_transformer(plate, rack):
    pl = sample_placements(plate, rack, 0.1, octahedral_rotations()[:2], seed=0)[:3]
    X = StabilityFeaturizer("multi178").fit_transform([(plate, rack, p) for p in pl])
    assert X.shape == (3, 178)


# --------------------------------------------------------------------------- #
# Zernike
# --------------------------------------------------------------------------- #


def test_zernike_length_and_order():
    idx = moment_indices()
    assert idx[:5] == [(0, 0), (1, 1), (2, 0), (2, 2), (3, 1)]
    assert len(zernike_descriptor(box_cloud())) == 37


def test_zernike_rigid_invariance(mug):
    rng = np.random.default_rng(1)
    ref = zernike_descriptor(mug)
    for _ in range(5):
        q = rng.normal(size=4)
        moved = transform_cloud(mug, Rotation(q / np.linalg.norm(q)), rng.normal(size=3))
        np.testing.assert_allclose(zernike_descriptor(moved), ref, atol=1e-3)


def test_ball_has_no_angular_moments():
    rng = np.random.default_rng(2)
    # stratified shells make the sample close to uniform in the ball
    v = rng.normal(size=(20000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = v * np.cbrt(rng.random(20000))[:, None]
    z = zernike_descriptor(PointCloud(pts))
    idx = moment_indices()[:37]
    radial_part = max(z[k] for k, (n, l) in enumerate(idx) if l == 0)
    angular = max(z[k] for k, (n, l) in enumerate(idx) if l > 0)
    assert angular < 0.1 * radial_part


def test_zernike_needs_points():
    with pytest.raises(TooSparse):
        zernike_descriptor(PointCloud(np.zeros((5, 3))))


# --------------------------------------------------------------------------- #
# FPFH and bag of words
# --------------------------------------------------------------------------- #


def test_fpfh_rows_sum_to_300(mug):
    sig = fpfh_signatures(mug)
    assert sig.shape == (len(mug), FPFH_DIM)
    live = sig.sum(axis=1) > 0
    np.testing.assert_allclose(sig[live].sum(axis=1), 300.0, atol=1e-6)


def test_planar_cloud_concentrates_in_center_bins():
    sig = fpfh_signatures(slab(0.1, 0.005))
    mid = N_BINS // 2
    for f in range(3):
        assert np.all(sig[:, f * N_BINS + mid] == pytest.approx(100.0))


def test_fpfh_rigid_invariance(mug):
    rng = np.random.default_rng(3)
    q = rng.normal(size=4)
    moved = transform_cloud(mug, Rotation(q / np.linalg.norm(q)), rng.normal(size=3))
    np.testing.assert_allclose(fpfh_signatures(moved), fpfh_signatures(mug), atol=1e-6)


def test_isolated_point_has_zero_signature():
    pts = np.vstack([slab(0.05, 0.005).points, [[5.0, 5.0, 5.0]]])
    sig = fpfh_signatures(PointCloud(pts), radius=0.012)
    assert np.all(sig[-1] == 0)


def _definitional_fpfh(points, normals, radius):
    n = len(points)
    nbrs = [[j for j in range(n) if j != i and np.linalg.norm(points[j] - points[i]) <= radius]
            for i in range(n)]

    def blocks(h):
        h = h.reshape(3, N_BINS)
        s = h.sum(axis=1, keepdims=True)
        return np.where(s > 0, 100 * h / np.where(s > 0, s, 1), 0).ravel()

    spfh = np.zeros((n, FPFH_DIM))
    for i in range(n):
        for j in nbrs[i]:
            a, p, t, ok = pair_features(points[[i]], normals[[i]], points[[j]], normals[[j]])
            if not ok[0]:
                continue
            vals = [(a[0] + 1) / 2, (p[0] + 1) / 2, (t[0] + math.pi) / (2 * math.pi)]
            for f, v in enumerate(vals):
                spfh[i, f * N_BINS + min(int(math.floor(N_BINS * v)), N_BINS - 1)] += 1
        spfh[i] = blocks(spfh[i])
    out = np.zeros((n, FPFH_DIM))
    for i in range(n):
        if not nbrs[i]:
            continue
        acc = sum(spfh[j] / np.linalg.norm(points[j] - points[i]) for j in nbrs[i])
        out[i] = blocks(spfh[i] + acc / len(nbrs[i]))
    return out


def test_two_pass_matches_definition():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(50, 3))
    pts = 0.05 * v / np.linalg.norm(v, axis=1, keepdims=True) + 0.002 * rng.normal(size=(50, 3))
    normals = estimate_normals(pts)
    got = fpfh_signatures(PointCloud(pts), radius=0.03, normals=normals)
    np.testing.assert_allclose(got, _definitional_fpfh(pts, normals, 0.03), atol=1e-9)


def test_bow_histogram_properties(vocab_small, mug):
    h = bow_histogram(mug, vocab_small)
    assert h.shape == (100,) and h.sum() == pytest.approx(1.0, abs=1e-9)
    same = PointCloud(np.zeros((20, 3)))
    assert np.count_nonzero(bow_histogram(same, vocab_small)) == 1
    rng = np.random.default_rng(5)
    for _ in range(5):
        cloud = PointCloud(rng.normal(size=(60, 3)) * 0.05)
        assert bow_histogram(cloud, vocab_small).sum() == pytest.approx(1.0, abs=1e-9)


def test_assignment_matches_exhaustive_scan(vocab_small, plate):
    sig = fpfh_signatures(plate)
    got = vocab_small.assign(sig)
    for row, w in zip(sig[:200], got[:200]):
        d = [np.sum((row - c) ** 2) for c in vocab_small.centers_]
        assert w == min(range(len(d)), key=lambda k: (d[k], k))


def test_vocabulary_needs_training_and_round_trips(tmp_path, vocab_small):
    with pytest.raises(VocabularyMissing):
        bow_histogram(box_cloud(), BowVocabulary())
    vocab_small.save(tmp_path / "v.txt")
    back = BowVocabulary.load(tmp_path / "v.txt")
    assert np.array_equal(back.centers_, vocab_small.centers_)
    assert (tmp_path / "v.txt").read_text().startswith("bow-vocab v1 100 33 0\n")


# --------------------------------------------------------------------------- #
# color, curvature and shape
# --------------------------------------------------------------------------- #


def test_red_and_gray_color_histograms():
    red = PointCloud(np.zeros((10, 3)), np.tile([1.0, 0, 0], (10, 1)))
    h, ok = color_histogram(red)
    assert ok and h[:36].max() == 1.0 and h[36 + 9] == 1.0
    gray = PointCloud(np.zeros((10, 3)), np.tile([0.4, 0.4, 0.4], (10, 1)))
    h, _ = color_histogram(gray)
    assert h[:36].reshape(6, 6)[:, 0].sum() == pytest.approx(1.0)


def test_color_histogram_without_colors():
    h, ok = color_histogram(box_cloud())
    assert not ok and np.all(h == 0)


def test_color_histogram_matches_naive_loop():
    rng = np.random.default_rng(6)
    cols = rng.random((300, 3))
    h, _ = color_histogram(PointCloud(np.zeros((300, 3)), cols))
    ref = np.zeros(46)
    import colorsys
    for c in cols:
        hh, s, v = colorsys.rgb_to_hsv(*c)
        ref[min(int(hh * 6), 5) * 6 + min(int(s * 6), 5)] += 1
        ref[36 + min(int(v * 10), 9)] += 1
    np.testing.assert_allclose(h, ref / 300, atol=1e-12)
    np.testing.assert_allclose(rgb_to_hsv(cols), [colorsys.rgb_to_hsv(*c) for c in cols], atol=1e-12)


def test_curvature_of_plane_and_eigen_oracle(mug):
    h = curvature_histogram(slab(0.1, 0.005))
    assert h[0] == pytest.approx(1.0)
    h = curvature_histogram(mug)
    assert h.sum() == pytest.approx(1.0, abs=1e-9)
    pts = mug.points[:300]
    sigma = surface_variation(pts, 10)
    for i in range(0, 300, 37):
        d = np.linalg.norm(pts - pts[i], axis=1)
        d[i] = np.inf
        kth = np.sort(d)[9]
        nb = np.vstack([pts[i], pts[d <= kth + 1e-12 * max(1, kth)]])
        lam = np.linalg.eigvalsh(np.cov(nb.T, bias=True)).clip(0)
        assert sigma[i] == pytest.approx(lam[0] / lam.sum(), abs=1e-9)


def test_overall_shape(mug):
    line = PointCloud(np.column_stack([np.linspace(0, 1, 11), np.zeros(11), np.zeros(11)]))
    s = overall_shape(line)
    assert s[0] > 0 and np.allclose(s[1:], 0, atol=1e-12)
    np.testing.assert_array_equal(overall_shape(mug)[:3], covariance_eigenvalues(mug.points))
    moved = transform_cloud(mug, Rotation.from_axis_angle([1, 2, 3], 0.7), [0, 0, 0])
    np.testing.assert_allclose(overall_shape(moved), overall_shape(mug), atol=1e-9)


# --------------------------------------------------------------------------- #
# semantic vector
# --------------------------------------------------------------------------- #


def test_semantic_vector_layout(plate, rack, vocab_small):
    f = semantic_vector(plate, rack, vocab_small, 0.3)
    assert len(f.values) == 801
    assert f.values[-1] == 0.3
    assert f.block("base_height")[0] == 0.3
    assert sum(n for _, n in GROUPS) * 4 + 1 == 801


def test_identical_clouds(mug, vocab_small):
    f = semantic_vector(mug, mug, vocab_small, 0.0)
    for name, _ in GROUPS:
        o = f.block(name + ".object")
        np.testing.assert_allclose(f.block(name + ".product"), o * o)
        np.testing.assert_array_equal(f.block(name + ".min"), o)


def test_swapping_object_and_base(plate, mug, vocab_small):
    a = semantic_vector(plate, mug, vocab_small, 0.1)
    b = semantic_vector(mug, plate, vocab_small, 0.1)
    for name, _ in GROUPS:
        np.testing.assert_array_equal(a.block(name + ".object"), b.block(name + ".base"))
        np.testing.assert_array_equal(a.block(name + ".base"), b.block(name + ".object"))
        np.testing.assert_array_equal(a.block(name + ".product"), b.block(name + ".product"))
        np.testing.assert_array_equal(a.block(name + ".min"), b.block(name + ".min"))


def test_semantic_blocks_are_normalized(plate, rack, vocab_small):
    f = semantic_vector(plate, rack, vocab_small, 0.0)
    for side in ("object", "base"):
        assert f.block("bow." + side).sum() == pytest.approx(1.0, abs=1e-9)
        assert f.block("curvature." + side).sum() == pytest.approx(1.0, abs=1e-9)
        c = f.block("color." + side)
        if c.any():
            assert c[:36].sum() == pytest.approx(1.0) and c[36:].sum() == pytest.approx(1.0)
    assert np.all(f.values[:-1] >= 0)
