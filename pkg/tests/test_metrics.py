from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semfuse import metrics
from semfuse.scene_io import DepthMap


def depth(values):
    return DepthMap(np.asarray(values, dtype=np.float32))


def mesh_of(vertices, triangles, labels=None):
    v = np.asarray(vertices, dtype=np.float64)
    return SimpleNamespace(
        vertices=v,
        triangles=np.asarray(triangles, dtype=np.int64),
        vertex_labels=None if labels is None else np.asarray(labels, dtype=np.uint8),
    )


# ---------------------------------------------------------------- depth errors

def test_depth_perfect_prediction():
    gt = depth([[1.0, 2.0], [3.0, 4.0]])
    rep = metrics.depth_errors(gt, gt)
    assert rep.abs_rel == 0.0 and rep.rms == 0.0 and rep.n_valid == 4


def test_depth_two_pixel_hand_values():
    rep = metrics.depth_errors(depth([[1.0, 5.0]]), depth([[2.0, 4.0]]))
    assert rep.abs_rel == pytest.approx(0.375)
    assert rep.rms == pytest.approx(1.0)


def test_depth_relative_scaling():
    g = np.array([[1.0, 2.0, 4.0, 8.0]], dtype=np.float32)
    rep = metrics.depth_errors(depth(1.1 * g), depth(g))
    assert rep.abs_rel == pytest.approx(0.1, rel=1e-6)


def test_depth_requires_overlap():
    with pytest.raises(ValueError, match="no valid overlap"):
        metrics.depth_errors(depth([[0.0, 1.0]]), depth([[1.0, 0.0]]))


def test_depth_only_joint_support_counts():
    pred = depth([[1.0, 0.0, 3.0]])
    gt = depth([[1.0, 2.0, 0.0]])
    rep = metrics.depth_errors(pred, gt)
    assert rep.n_valid == 1 and rep.abs_rel == 0.0


def test_depth_deviation_curve_values():
    # errors 0.05 and 0.35: below 0.1 -> half, from 0.4 on -> all
    rep = metrics.depth_errors(depth([[2.05, 2.35]]), depth([[2.0, 2.0]]))
    curve = dict(rep.deviation_curve)
    assert curve[0.1] == pytest.approx(0.5)
    assert curve[0.30000000000000004] == pytest.approx(0.5)
    assert curve[0.4] == pytest.approx(1.0)
    assert len(rep.deviation_curve) == 50
    assert rep.deviation_curve[0][0] == pytest.approx(0.1)
    assert rep.deviation_curve[-1][0] == pytest.approx(5.0)


def test_depth_rms_binned_by_gt_distance():
    pred = depth([[0.8, 1.0]])
    gt = depth([[0.7, 1.2]])
    rep = metrics.depth_errors(pred, gt)
    by = dict(rep.rms_by_distance)
    assert by[0.75] == pytest.approx(0.1, rel=1e-5)   # gt 0.7 lives in [0.5, 1.0)
    assert by[1.25] == pytest.approx(0.2, rel=1e-5)   # gt 1.2 lives in [1.0, 1.5)


@given(hnp.arrays(np.float32, (4, 5), elements=st.floats(0.125, 9.0, width=32)),
       hnp.arrays(np.float32, (4, 5), elements=st.floats(0.125, 9.0, width=32)))
@settings(max_examples=25)
def test_depth_curve_monotone(pred_vals, gt_vals):
    rep = metrics.depth_errors(depth(pred_vals), depth(gt_vals))
    fracs = [f for _, f in rep.deviation_curve]
    assert fracs == sorted(fracs)
    assert rep.abs_rel >= 0.0 and rep.rms >= 0.0


# ---------------------------------------------------------------- segmentation

def test_seg_perfect():
    g = np.array([0, 1, 2, 2, 1])
    rep = metrics.segmentation_scores(g, g, 3)
    assert rep.overall_acc == 1.0 and rep.average_acc == 1.0 and rep.average_iou == 1.0


def test_seg_hand_confusion():
    gt = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    pred = np.array([0, 0, 0, 1, 0, 1, 1, 1])
    rep = metrics.segmentation_scores(pred, gt, 2)
    assert rep.confusion.tolist() == [[3, 1], [1, 3]]
    assert rep.overall_acc == pytest.approx(0.75)
    assert rep.average_acc == pytest.approx(0.75)
    assert rep.average_iou == pytest.approx(0.6)
    assert rep.per_class_iou[0] == pytest.approx(3 / 5)


def test_seg_single_class_gt():
    gt = np.zeros(6, dtype=np.int64)
    rep = metrics.segmentation_scores(gt, gt, 4)
    assert rep.overall_acc == 1.0 and rep.average_acc == 1.0 and rep.average_iou == 1.0
    assert np.isnan(rep.per_class_iou[3])


def test_seg_absent_classes_excluded():
    gt = np.array([0, 0, 1, 1])
    pred = np.array([0, 2, 1, 1])
    rep = metrics.segmentation_scores(pred, gt, 3)
    # class 2 never occurs in GT: averages run over classes 0 and 1 only
    assert rep.average_acc == pytest.approx((0.5 + 1.0) / 2)
    assert np.isnan(rep.per_class_iou[2])


def test_seg_ignore_set():
    gt = np.array([0, 0, 9, 9])
    pred = np.array([0, 1, 0, 1])
    rep = metrics.segmentation_scores(pred, gt, 10, ignore=(9,))
    assert rep.confusion.sum() == 2
    assert rep.overall_acc == pytest.approx(0.5)


def test_seg_row_sums_are_gt_counts():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 5, 200)
    pred = rng.integers(0, 5, 200)
    rep = metrics.segmentation_scores(pred, gt, 5)
    want = [int((gt == k).sum()) for k in range(5)]
    assert rep.confusion.sum(axis=1).tolist() == want


@given(seed=st.integers(0, 2**31))
@settings(max_examples=20)
def test_seg_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 4, 120)
    pred = rng.integers(0, 4, 120)
    perm = rng.permutation(4)
    base = metrics.segmentation_scores(pred, gt, 4)
    mapped = metrics.segmentation_scores(perm[pred], perm[gt], 4)
    assert mapped.overall_acc == pytest.approx(base.overall_acc)
    assert mapped.average_iou == pytest.approx(base.average_iou, nan_ok=True)
    for k in range(4):
        a, b = base.per_class_iou[k], mapped.per_class_iou[int(perm[k])]
        assert (np.isnan(a) and np.isnan(b)) or a == pytest.approx(b)


# ---------------------------------------------------------------- 3D distances

def test_cloud_to_surface_against_cloud_is_nearest_point():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    cloud = np.array([[0.0, 0.0, 0.5], [2.0, 2.0, 2.0]])
    d = metrics.cloud_to_surface(pts, cloud)
    assert d[0] == pytest.approx(0.5)
    assert d[1] == pytest.approx(1.5)


def test_cloud_to_surface_empty_target_rejected():
    with pytest.raises(ValueError):
        metrics.cloud_to_surface(np.zeros((2, 3)), np.zeros((0, 3)))


def test_reconstruction_zero_distance_when_identical():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=np.float64)
    m = mesh_of(verts, [[0, 1, 2]])
    rep = metrics.reconstruction_report(verts, m)
    assert rep.gt_to_recon_avg == 0.0 and rep.recon_to_gt_avg == 0.0
    assert rep.completeness_d90 == 0.0 and rep.accuracy_pct_5cm == 100.0


def test_completeness_order_statistic():
    d = np.array([0.01] * 9 + [1.0])
    assert metrics.completeness_d90(d) == pytest.approx(0.01)
    # 1-based rank ceil(0.9 * 10) = 9 picks the 9th smallest
    assert metrics.completeness_d90(np.arange(1, 11) / 100.0) == pytest.approx(0.09)


def test_completeness_monotone_under_outlier():
    base = np.abs(np.random.default_rng(1).normal(0.02, 0.01, 40))
    with_outlier = np.append(base, 5.0)
    assert metrics.completeness_d90(with_outlier) >= metrics.completeness_d90(base)


def test_accuracy_threshold_straddle():
    gt_pts = np.array([[0.0, 0.0, 0.0]])
    verts = np.array([
        [0.04, 0.0, 0.0], [-0.04, 0.0, 0.0], [0.06, 0.0, 0.0], [-0.06, 0.0, 0.0],
    ])
    m = mesh_of(verts, [[0, 1, 2], [1, 2, 3]])
    rep = metrics.reconstruction_report(gt_pts, m)
    assert rep.accuracy_pct_5cm == pytest.approx(50.0)


# ---------------------------------------------------------------- 3D semantics

def test_transfer_exact_match_is_perfect():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=np.float64)
    labels = np.array([0, 1, 2], dtype=np.uint8)
    m = mesh_of(pts, [[0, 1, 2]], labels)
    rep = metrics.semantic_3d_transfer(pts, labels, m, num_classes=3)
    assert rep.overall_acc == 1.0


def test_transfer_single_vertex_constant_prediction():
    pts = np.random.default_rng(2).normal(size=(20, 3))
    m = SimpleNamespace(vertices=np.zeros((1, 3)), vertex_labels=np.array([3], dtype=np.uint8))
    got = metrics.transfer_labels(pts, m.vertices, m.vertex_labels)
    assert (got == 3).all()


def test_transfer_tie_takes_lowest_vertex_index():
    verts = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    labels = np.array([7, 2], dtype=np.uint8)
    got = metrics.transfer_labels(np.zeros((1, 3)), verts, labels)
    assert got[0] == 7  # vertex 0 wins the tie even though its label is larger


def test_transfer_matches_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (100, 3))
    verts = rng.uniform(-1, 1, (20, 3))
    labels = rng.integers(0, 5, 20).astype(np.uint8)
    got = metrics.transfer_labels(pts, verts, labels)
    d = np.linalg.norm(pts[:, None, :] - verts[None, :, :], axis=2)
    want = labels[np.argmin(d, axis=1)]  # argmin takes the first (lowest) index
    assert np.array_equal(got, want)


def test_transfer_empty_mesh_rejected():
    with pytest.raises(ValueError):
        metrics.transfer_labels(np.zeros((1, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.uint8))


# ---------------------------------------------------------------- cropping

def test_crop_all_below_identity():
    pts = np.array([[0, 0, 0.2], [1, 1, 0.9]])
    assert np.array_equal(metrics.crop_ground_truth(pts, z_max=1.0), pts)


def test_crop_all_above_empty():
    pts = np.array([[0, 0, 1.5], [1, 1, 2.0]])
    assert metrics.crop_ground_truth(pts, z_max=1.0).shape == (0, 3)


def test_crop_mixed_count_and_labels():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 2, (50, 3))
    labels = rng.integers(0, 3, 50)
    kept, kept_labels = metrics.crop_ground_truth(pts, labels, z_max=1.0)
    want = int((pts[:, 2] <= 1.0).sum())
    assert len(kept) == want == len(kept_labels)
    assert (kept[:, 2] <= 1.0).all()


def test_crop_boundary_inclusive():
    pts = np.array([[0.0, 0.0, 1.0]])
    assert len(metrics.crop_ground_truth(pts, z_max=1.0)) == 1
