import math
import pytest

import numpy as np

from geo_evs.gar import build_condition
from geo_evs.lpsr import (PSNR_CAP, SparseReference, UndefinedMetricError,
                          EvalRecord, masked_mse, s_psnr, s_mae_rmse, s_ssim,
                          gaussian_window, to_luma, reference_from_condition,
                          make_sparse_reference, evaluate_view, check_bin_edges,
                          bin_and_aggregate)
from geo_evs.scene import render_scene

from geo_evs.tests.utils import (make_unittest_camera, make_unittest_view,
                                 make_wall_scene)


def make_random_reference(rng, resolution=(12, 12), density=0.7, scale=1.):
    height, width = resolution
    reference = rng.uniform(0., scale, size=(height, width, 3))
    mask = rng.random(resolution) < density
    mask[0, 0] = True
    return SparseReference(np.where(mask[..., None], reference, 0.), mask)


def oracle_mse(pred, ref):
    total, count = 0., 0
    height, width = ref.resolution
    for y in range(height):
        for x in range(width):
            if ref.mask[y, x]:
                for channel in range(3):
                    total += (pred[y, x, channel] - ref.reference[y, x, channel]) ** 2
                count += 1
    return total / (3. * count)


def oracle_ssim(pred, ref):
    window = gaussian_window()
    radius = window.shape[0] // 2
    x, y = to_luma(pred), to_luma(ref.reference)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    height, width = ref.resolution
    scores = []
    for i in range(height):
        for j in range(width):
            if not ref.mask[i, j]:
                continue
            weight, sx, sy, sxx, syy, sxy = 0., 0., 0., 0., 0., 0.
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    k, l = i + di, j + dj
                    if (0 <= k < height) and (0 <= l < width) and ref.mask[k, l]:
                        w = window[di + radius, dj + radius]
                        weight += w
                        sx += w * x[k, l]
                        sy += w * y[k, l]
                        sxx += w * x[k, l] ** 2
                        syy += w * y[k, l] ** 2
                        sxy += w * x[k, l] * y[k, l]
            if weight < 0.5:
                continue
            mu_x, mu_y = sx / weight, sy / weight
            var_x, var_y = sxx / weight - mu_x ** 2, syy / weight - mu_y ** 2
            cov = sxy / weight - mu_x * mu_y
            scores.append(((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                          / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))
    return np.mean(scores)


@pytest.mark.parametrize('seed', range(500))
def test_masked_mse_oracle(seed):
    rng = np.random.default_rng(seed)
    height, width = rng.integers(1, 33, size=2)
    ref = make_random_reference(rng, resolution=(int(height), int(width)),
                                density=rng.uniform(0.01, 1.))
    pred = rng.random((height, width, 3))

    mse = oracle_mse(pred, ref)
    assert masked_mse(pred, ref) == pytest.approx(mse, rel=1e-12)
    assert s_psnr(pred, ref) == pytest.approx(10. * math.log10(1. / mse), rel=1e-12)


def test_s_psnr_known_value():
    rng = np.random.default_rng(0)
    ref = make_random_reference(rng, scale=0.9)
    pred = np.where(ref.mask[..., None], ref.reference + 0.1, 0.5)
    assert s_psnr(pred, ref) == pytest.approx(20., abs=1e-9)


def test_s_psnr_cap():
    ref = make_random_reference(np.random.default_rng(1))
    assert s_psnr(ref.reference.copy(), ref) == PSNR_CAP


def test_s_psnr_monotone():
    rng = np.random.default_rng(2)
    ref = make_random_reference(rng, scale=0.5)
    noise = rng.normal(size=ref.reference.shape)
    scores = [s_psnr(ref.reference + sigma * noise, ref)
              for sigma in (0.01, 0.03, 0.1, 0.3)]
    assert all(a > b for a, b in zip(scores, scores[1:]))


def test_s_mae_rmse():
    rng = np.random.default_rng(3)
    ref = make_random_reference(rng, scale=0.8)
    mae, rmse = s_mae_rmse(ref.reference + 0.2, ref)
    assert mae == pytest.approx(0.2, rel=1e-12)
    assert rmse == pytest.approx(0.2, rel=1e-12)

    pred = rng.random(ref.reference.shape)
    mae, rmse = s_mae_rmse(pred, ref)
    diff = (pred - ref.reference)[ref.mask]
    assert mae == pytest.approx(np.mean(np.abs(diff)), rel=1e-12)
    assert rmse == pytest.approx(np.sqrt(masked_mse(pred, ref)), rel=1e-12)
    assert rmse >= mae


def test_s_ssim_identity():
    ref = make_random_reference(np.random.default_rng(4), density=1.)
    assert s_ssim(ref.reference.copy(), ref) == pytest.approx(1., abs=1e-12)


@pytest.mark.parametrize('seed', range(100))
def test_s_ssim_oracle(seed):
    rng = np.random.default_rng(seed)
    ref = make_random_reference(rng, resolution=(14, 12), density=0.6)
    pred = np.clip(ref.reference + rng.normal(scale=0.1, size=ref.reference.shape),
                   0., 1.)
    assert abs(s_ssim(pred, ref) - oracle_ssim(pred, ref)) < 1e-9


def test_metrics_ignore_pixels_outside_reference():
    rng = np.random.default_rng(5)
    ref = make_random_reference(rng, density=0.5)
    pred = rng.random(ref.reference.shape)
    other = np.where(ref.mask[..., None], pred, rng.random(pred.shape))

    assert masked_mse(pred, ref) == masked_mse(other, ref)
    assert s_mae_rmse(pred, ref) == s_mae_rmse(other, ref)
    assert s_ssim(pred, ref) == s_ssim(other, ref)


def test_s_ssim_undefined_at_lidar_sparsity():
    ref = make_random_reference(np.random.default_rng(6))
    mask = np.zeros(ref.resolution, dtype=bool)
    mask[3, 4] = True
    sparse = SparseReference(np.where(mask[..., None], ref.reference, 0.), mask)
    with pytest.raises(UndefinedMetricError):
        s_ssim(sparse.reference, sparse)

    record = evaluate_view(sparse.reference, sparse, pose_offset=10.)
    assert record.s_ssim is None
    assert record.s_psnr == PSNR_CAP
    assert record.valid_fraction == pytest.approx(1. / 144)


def test_empty_reference():
    ref = SparseReference(np.zeros((4, 4, 3)), np.zeros((4, 4), dtype=bool))
    with pytest.raises(ValueError):
        masked_mse(np.zeros((4, 4, 3)), ref)
    with pytest.raises(ValueError):
        s_ssim(np.zeros((4, 4, 3)), ref)


def test_shape_mismatch():
    ref = make_random_reference(np.random.default_rng(7))
    with pytest.raises(ValueError):
        s_psnr(np.zeros((12, 11, 3)), ref)
    with pytest.raises(ValueError):
        SparseReference(np.zeros((4, 4, 3)), np.ones((4, 5)))


def make_wall_view(resolution=(64, 64)):
    K, T = make_unittest_camera(resolution=resolution)
    return render_scene(make_wall_scene(depth=5.), K, T)


def test_make_sparse_reference():
    view = make_wall_view()
    ref = make_sparse_reference(view, 0.02, seed=0)
    assert ref.num_valid == 82
    assert ref.valid_fraction == pytest.approx(82. / 4096)
    np.testing.assert_array_equal(ref.reference[ref.mask], view.rgb[ref.mask])
    assert np.all(ref.reference[~ref.mask] == 0)

    again = make_sparse_reference(view, 0.02, seed=0)
    np.testing.assert_array_equal(ref.mask, again.mask)
    other = make_sparse_reference(view, 0.02, seed=1)
    assert not np.array_equal(ref.mask, other.mask)


def test_make_sparse_reference_support():
    view = make_unittest_view(seed=3, resolution=(32, 32))
    ref = make_sparse_reference(view, 0.5, seed=2)
    assert np.all(view.finite_mask[ref.mask])
    num_finite = int(np.count_nonzero(view.finite_mask))
    assert ref.num_valid == int(math.floor(0.5 * num_finite + 0.5))

    full = make_sparse_reference(view, 1., seed=2)
    np.testing.assert_array_equal(full.mask, view.finite_mask)


@pytest.mark.parametrize('fraction', [0., 1.5, 1e-4])
def test_make_sparse_reference_invalid(fraction):
    with pytest.raises(ValueError):
        make_sparse_reference(make_wall_view(), fraction, seed=0)


def test_reference_from_condition():
    view = make_unittest_view(seed=1)
    condition = build_condition(view, view.intrinsics, view.pose)
    ref = reference_from_condition(condition)
    assert ref.num_valid == int(np.count_nonzero(condition.validity))
    assert s_psnr(view.rgb, ref) == PSNR_CAP


def make_record(pose_offset, valid_fraction, s_psnr=20., s_ssim=0.5):
    return EvalRecord(s_psnr, s_ssim, 0.1, 0.2, valid_fraction,
                      pose_offset=pose_offset, scene='scene_0000', view='cam1')


def test_bin_and_aggregate():
    records = [make_record(0., 0.01, s_psnr=10.),
               make_record(4.99, 0.02, s_psnr=20., s_ssim=None),
               make_record(5., 0.05),
               make_record(30., 0.1),
               make_record(31., 0.5)]
    report = bin_and_aggregate(records, offset_bins=[0., 5., 10., 15., 20., 30.],
                               sparsity_bins=[0., 0.02, 0.05, 0.1])

    assert report['schema_version'] == 1
    assert len(report['records']) == 5
    assert report['overall']['count'] == 5

    by_offset = report['by_pose_offset']
    assert [row['count'] for row in by_offset['bins']] == [2, 1, 0, 0, 1]
    assert by_offset['other']['count'] == 1
    first = by_offset['bins'][0]
    assert (first['low'], first['high']) == (0., 5.)
    assert first['s_psnr'] == pytest.approx(15.)
    assert first['s_ssim'] == pytest.approx(0.5)
    assert by_offset['bins'][2]['s_psnr'] is None

    by_sparsity = report['by_sparsity']
    assert [row['count'] for row in by_sparsity['bins']] == [1, 1, 2]
    assert by_sparsity['other']['count'] == 1


@pytest.mark.parametrize('edges', [[0., 5., 5., 10.], [10., 5.], [0.]])
def test_check_bin_edges_invalid(edges):
    with pytest.raises(ValueError):
        check_bin_edges(edges)
    with pytest.raises(ValueError):
        bin_and_aggregate([make_record(0., 0.1)], offset_bins=edges)


def test_eval_record():
    record = make_record(12.5, 0.05, s_ssim=None)
    assert EvalRecord.from_dict(record.to_dict()) == record
    with pytest.raises(ValueError):
        EvalRecord(20., 0.5, 0.3, 0.2, 0.1)
    with pytest.raises(ValueError):
        EvalRecord(20., 0.5, 0.1, 0.2, 0.)
