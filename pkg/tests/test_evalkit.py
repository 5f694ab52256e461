import numpy as np
import pytest
from hypothesis import given, strategies as st

from lnsnet import evalkit as ek
from lnsnet.errors import InvalidArgument, ShapeError
from oracles import asa_brute, boundary_scan, br_bp_brute, count_components, f_beta_brute

label_maps = st.builds(
    lambda seed, h, w, k: np.random.default_rng(seed).integers(0, k, (h, w)),
    st.integers(0, 2**16), st.integers(1, 9), st.integers(1, 9), st.integers(1, 5))


def _is_connected_partition(lm):
    labels = lm.labels
    assert sorted(np.unique(labels)) == list(range(lm.num_segments))
    return count_components(labels) == lm.num_segments


# ---- connectivity

def test_connected_map_unchanged_up_to_compaction():
    labels = np.array([[5, 5, 9], [5, 5, 9], [2, 2, 9]])
    lm = ek.enforce_connectivity(labels)
    np.testing.assert_array_equal(lm.labels, [[0, 0, 1], [0, 0, 1], [2, 2, 1]])
    assert lm.num_segments == 3


def test_stray_pixel_absorbed():
    labels = np.zeros((5, 5), int)
    labels[2, 2] = 1
    lm = ek.enforce_connectivity(labels, num_superpixels=2)
    assert lm.num_segments == 1 and not lm.labels.any()


def test_checkerboard_merges_into_connected_partition():
    labels = np.indices((4, 4)).sum(axis=0) % 2
    lm = ek.enforce_connectivity(labels, num_superpixels=2)
    assert _is_connected_partition(lm)
    assert lm.num_segments < 16


def test_merge_prefers_longest_shared_boundary():
    labels = np.array([[0, 0, 0, 0],
                       [0, 0, 0, 0],
                       [1, 2, 0, 0],
                       [1, 1, 1, 1]])
    # the single pixel of label 2 touches label 1 twice and label 0 twice: tie -> lower id
    lm = ek.enforce_connectivity(labels, min_size_fraction=0.25, num_superpixels=3)
    assert lm.labels[2, 1] == lm.labels[0, 0]


@given(labels=label_maps, frac=st.floats(0.0, 1.0))
def test_connectivity_properties(labels, frac):
    before = count_components(labels)
    lm = ek.enforce_connectivity(labels, frac)
    assert _is_connected_partition(lm)
    assert lm.num_segments <= before
    assert lm.labels.shape == labels.shape


@given(labels=label_maps)
def test_connected_regions_count_matches_flood_fill(labels):
    comp, count = ek.connected_regions(labels)
    assert count == count_components(labels)
    assert comp.ravel()[0] == 0


def test_union_find():
    ds = ek.DisjointSet(5)
    ds.union(0, 1)
    ds.union(3, 4)
    ds.union(1, 4)
    assert ds.find(0) == ds.find(3) and ds.find(2) == 2


# ---- boundaries

def test_boundary_examples():
    assert not ek.boundary_map(np.zeros((4, 4), int)).any()
    labels = np.zeros((4, 6), int)
    labels[:, 3:] = 1
    b = ek.boundary_map(labels)
    assert b[:, 2].all() and b.sum() == 4


@given(labels=label_maps)
def test_boundary_matches_scan(labels):
    np.testing.assert_array_equal(ek.boundary_map(labels), boundary_scan(labels))


def test_br_bp_examples():
    gt = np.zeros((6, 6), bool)
    gt[:, 2] = True
    assert ek.boundary_recall_precision(gt, gt) == (1.0, 1.0)
    assert ek.boundary_recall_precision(np.zeros_like(gt), gt) == (0.0, 1.0)
    shifted = np.zeros_like(gt)
    shifted[:, 3] = True
    assert ek.boundary_recall_precision(shifted, gt, 2) == (1.0, 1.0)
    assert ek.boundary_recall_precision(shifted, gt, 0) == (0.0, 0.0)


@given(a=label_maps, tol=st.integers(0, 3), seed=st.integers(0, 2**16))
def test_br_bp_match_brute_force_and_swap(a, tol, seed):
    b = np.random.default_rng(seed).integers(0, 3, a.shape)
    pa, pb = ek.boundary_map(a), ek.boundary_map(b)
    br, bp = ek.boundary_recall_precision(pa, pb, tol)
    assert (br, bp) == pytest.approx(br_bp_brute(pa, pb, tol), abs=1e-15)
    if pa.any() and pb.any():
        assert ek.boundary_recall_precision(pb, pa, tol) == pytest.approx((bp, br))


def test_empty_gt_is_flagged():
    rep = ek.evaluate(np.indices((4, 4))[1] // 2, np.zeros((4, 4), int))
    assert rep.br == 1.0 and rep.gt_boundary_empty


# ---- ASA and F

def test_asa_examples():
    gt = np.zeros((4, 4), int)
    gt[:, 2:] = 1
    assert ek.asa(gt, gt) == 1.0
    assert ek.asa(np.zeros((4, 4), int), gt) == 0.5


@given(pred=label_maps, seed=st.integers(0, 2**16))
def test_asa_matches_overlap_oracle_and_refinement(pred, seed):
    gt = np.random.default_rng(seed).integers(0, 3, pred.shape)
    assert ek.asa(pred, gt) == pytest.approx(asa_brute(pred, gt), abs=1e-15)
    refinement = pred * 10 + gt  # every refined segment lies inside one gt segment
    assert ek.asa(refinement, gt) == 1.0


@given(bp=st.floats(0, 1), br=st.floats(0, 1))
def test_f_beta_formula(bp, br):
    assert ek.f_beta(bp, br) == pytest.approx(f_beta_brute(bp, br, 4.0))
    assert 0.0 <= ek.f_beta(bp, br) <= 1.0


def test_evaluate_perfect_and_mismatch():
    gt = np.indices((6, 6))[1] // 3
    rep = ek.evaluate(gt, gt)
    assert (rep.br, rep.bp, rep.asa, rep.f_beta) == (1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ShapeError, match="6x6.*5x6"):
        ek.evaluate(gt, np.zeros((5, 6), int))


def test_multi_gt_selection():
    pred = np.indices((8, 8))[1] // 4
    coarse = np.zeros((8, 8), int)
    fine = pred * 2 + (np.indices((8, 8))[0] // 4)
    single = ek.evaluate_multi_gt(pred, [fine])
    assert single.as_dict() == ek.evaluate(pred, fine).as_dict()
    assert ek.evaluate_multi_gt(pred, [coarse, pred]).f_beta == 1.0
    both = ek.evaluate_multi_gt(pred, [coarse, fine])
    reps = [ek.evaluate(pred, g) for g in (coarse, fine)]
    best = int(np.argmax([r.f_beta for r in reps]))
    assert both.chosen_gt == best and both.f_beta == reps[best].f_beta
    with pytest.raises(InvalidArgument):
        ek.evaluate_multi_gt(pred, [])


# ---- I/O

def test_label_png_round_trip(tmp_path):
    labels = np.random.default_rng(0).integers(0, 40000, (7, 5))
    ek.write_label_png(tmp_path / "l.png", labels)
    np.testing.assert_array_equal(ek.read_label_png(tmp_path / "l.png"), labels)
    with pytest.raises(InvalidArgument):
        ek.write_label_png(tmp_path / "x.png", np.full((2, 2), 70000))


def test_report_csv(tmp_path):
    gt = np.indices((4, 4))[1] // 2
    rows = [ek.evaluate(gt, gt).row("a")]
    ek.write_report_csv(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "image_id,K,br,bp,asa,f_beta,chosen_gt"
    assert lines[1].startswith("a,2,1.0,1.0,1.0,1.0,0")
