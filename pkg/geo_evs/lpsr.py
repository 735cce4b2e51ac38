import math
import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

from geo_evs import gar

REPORT_SCHEMA_VERSION = 1
PSNR_CAP = 99.
MAX_VALUE = 1.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW_SIZE = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_MIN_WEIGHT = 0.5
DEFAULT_OFFSET_BINS = (0., 5., 10., 15., 20., 30.)
DEFAULT_SPARSITY_BINS = (0., 0.02, 0.05, 0.1)
METRICS = ('s_psnr', 's_ssim', 's_mae', 's_rmse', 'valid_fraction')


class UndefinedMetricError(ValueError):
    pass


class SparseReference(object):
    """Sparse reference image `R` with its valid-pixel mask `M`. The valid
    set `Omega = {p : M(p) = 1}` may be empty, but the metrics reject it."""
    def __init__(self, reference, mask):
        reference = np.asarray(reference, dtype=np.float64)
        mask = np.asarray(mask).astype(bool)
        if (reference.ndim != 3) or (reference.shape[2] != 3):
            raise ValueError('Expected a HxWx3 reference, got shape '
                             '{0}.'.format(reference.shape))
        if mask.shape != reference.shape[:2]:
            raise ValueError('The mask of shape {0} does not match the reference '
                             'of shape {1}.'.format(mask.shape, reference.shape))
        if not np.all((reference >= 0) & (reference <= 1)):
            raise ValueError('The reference values must be in [0, 1].')
        self.reference = reference
        self.mask = mask

    @property
    def resolution(self):
        return self.mask.shape

    @property
    def num_valid(self):
        return int(np.count_nonzero(self.mask))

    @property
    def valid_fraction(self):
        return self.num_valid / float(self.mask.size)


def _masked_differences(pred, ref):
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != ref.reference.shape:
        raise ValueError('The prediction of shape {0} does not match the '
                         'reference of shape {1}.'.format(pred.shape,
                                                          ref.reference.shape))
    if ref.num_valid == 0:
        raise ValueError('The sparse reference has an empty valid set.')
    return pred[ref.mask] - ref.reference[ref.mask]


def masked_mse(pred, ref):
    """Mean over `Omega` of the squared norm of the pixel difference, divided
    by the number of channels."""
    diff = _masked_differences(pred, ref)
    return float(np.mean(np.sum(diff ** 2, axis=1)) / 3.)


def s_psnr(pred, ref):
    mse = masked_mse(pred, ref)
    if mse == 0:
        return PSNR_CAP
    return 10. * math.log10(MAX_VALUE ** 2 / mse)


def s_mae_rmse(pred, ref):
    diff = _masked_differences(pred, ref)
    return float(np.mean(np.abs(diff))), float(np.sqrt(np.mean(diff ** 2)))


def gaussian_window(size=SSIM_WINDOW_SIZE, sigma=SSIM_SIGMA):
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.
    profile = np.exp(-offsets ** 2 / (2. * sigma ** 2))
    window = np.outer(profile, profile)
    return window / np.sum(window)


def to_luma(image):
    return np.asarray(image, dtype=np.float64) @ LUMA_WEIGHTS


def _windowed_sum(values, window):
    radius = window.shape[0] // 2
    padded = np.pad(values, radius, mode='constant')
    return np.einsum('ijkl,kl->ij', sliding_window_view(padded, window.shape),
                     window)


def s_ssim(pred, ref):
    """Masked SSIM on luma.

    The Gaussian window of every pixel is restricted to the valid pixels
    (zero padding outside the image) and renormalized. Pixels whose window
    keeps less than half of its weight are excluded, and the score is the
    mean per-pixel SSIM over the remaining pixels of `Omega`.
    """
    _masked_differences(pred, ref)
    window = gaussian_window()
    weights = ref.mask.astype(np.float64)
    x, y = to_luma(pred) * weights, to_luma(ref.reference) * weights

    valid_weight = _windowed_sum(weights, window)
    included = ref.mask & (valid_weight >= SSIM_MIN_WEIGHT)
    if not np.any(included):
        raise UndefinedMetricError('No valid pixel has a window with valid weight '
                         '>= {0}.'.format(SSIM_MIN_WEIGHT))

    norm = valid_weight[included]
    mu_x = _windowed_sum(x, window)[included] / norm
    mu_y = _windowed_sum(y, window)[included] / norm
    var_x = _windowed_sum(x * x, window)[included] / norm - mu_x ** 2
    var_y = _windowed_sum(y * y, window)[included] / norm - mu_y ** 2
    cov = _windowed_sum(x * y, window)[included] / norm - mu_x * mu_y

    c1, c2 = (SSIM_K1 * MAX_VALUE) ** 2, (SSIM_K2 * MAX_VALUE) ** 2
    ssim = (((2. * mu_x * mu_y + c1) * (2. * cov + c2))
            / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))
    return float(np.mean(ssim))


def reference_from_condition(condition):
    """Sparse reference taken from a rasterized condition map: `Omega` is its
    validity channel."""
    return SparseReference(condition.rgb, condition.validity)


def make_sparse_reference(truth, subsample_fraction, seed):
    """Simulated LiDAR reference: a seeded uniform subsample of the pixels
    that the self-projection of `truth` keeps valid (its finite-depth
    pixels). `round(fraction * n)` pixels are drawn without replacement."""
    if not (0. < subsample_fraction <= 1.):
        raise ValueError('The subsample fraction must be in (0, 1], got '
                         '{0}.'.format(subsample_fraction))
    condition = gar.build_condition(truth, truth.intrinsics, truth.pose)
    support = np.flatnonzero(condition.validity)
    count = int(math.floor(subsample_fraction * support.size + 0.5))
    if count == 0:
        raise ValueError('A subsample fraction of {0} of {1} valid pixels gives '
                         'an empty reference.'.format(subsample_fraction,
                                                      support.size))

    rng = np.random.default_rng(seed)
    selected = rng.choice(support, size=count, replace=False)
    mask = np.zeros(condition.validity.size, dtype=bool)
    mask[selected] = True
    mask = mask.reshape(condition.validity.shape)

    return SparseReference(np.where(mask[..., None], condition.rgb, 0.), mask)


class EvalRecord(object):
    def __init__(self, s_psnr, s_ssim, s_mae, s_rmse, valid_fraction,
                 pose_offset=0., scene=None, view=None):
        if not (0. < valid_fraction <= 1.):
            raise ValueError('The valid fraction must be in (0, 1], got '
                             '{0}.'.format(valid_fraction))
        if (s_mae < 0) or (s_rmse < s_mae - 1e-12):
            raise ValueError('Expected s_rmse >= s_mae >= 0, got s_mae={0} and '
                             's_rmse={1}.'.format(s_mae, s_rmse))
        self.s_psnr = float(s_psnr)
        self.s_ssim = None if (s_ssim is None) else float(s_ssim)
        self.s_mae = float(s_mae)
        self.s_rmse = float(s_rmse)
        self.valid_fraction = float(valid_fraction)
        self.pose_offset = float(pose_offset)
        self.scene = scene
        self.view = view

    def to_dict(self):
        return {'scene': self.scene, 'view': self.view,
                'pose_offset': self.pose_offset,
                's_psnr': self.s_psnr, 's_ssim': self.s_ssim,
                's_mae': self.s_mae, 's_rmse': self.s_rmse,
                'valid_fraction': self.valid_fraction}

    @classmethod
    def from_dict(cls, data):
        return cls(data['s_psnr'], data['s_ssim'], data['s_mae'],
                   data['s_rmse'], data['valid_fraction'],
                   pose_offset=data.get('pose_offset', 0.),
                   scene=data.get('scene'), view=data.get('view'))

    def __eq__(self, other):
        if not isinstance(other, EvalRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def evaluate_view(pred, ref, pose_offset=0., scene=None, view=None):
    """All the sparse metrics of one view. `s_ssim` is `None` when no pixel
    of the reference has a window dense enough."""
    mae, rmse = s_mae_rmse(pred, ref)
    try:
        ssim = s_ssim(pred, ref)
    except UndefinedMetricError:
        ssim = None
    return EvalRecord(s_psnr(pred, ref), ssim, mae, rmse,
                      ref.valid_fraction, pose_offset=pose_offset,
                      scene=scene, view=view)


def check_bin_edges(edges, name='bin'):
    edges = [float(edge) for edge in edges]
    if len(edges) < 2:
        raise ValueError('The {0} edges need at least two values, got '
                         '{1}.'.format(name, edges))
    if any(high <= low for low, high in zip(edges, edges[1:])):
        raise ValueError('The {0} edges must be strictly increasing, got '
                         '{1}.'.format(name, edges))
    return edges


def _aggregate(records):
    aggregate = {'count': len(records)}
    for metric in METRICS:
        values = [getattr(record, metric) for record in records
                  if getattr(record, metric) is not None]
        aggregate[metric] = float(np.mean(values)) if values else None
    return aggregate


def _bin_records(records, key, edges):
    groups = [[] for _ in edges[1:]]
    other = []
    for record in records:
        value = getattr(record, key)
        for index, (low, high) in enumerate(zip(edges, edges[1:])):
            last = (index == len(edges) - 2)
            if (low <= value < high) or (last and value == high):
                groups[index].append(record)
                break
        else:
            other.append(record)

    bins = []
    for (low, high), group in zip(zip(edges, edges[1:]), groups):
        aggregate = _aggregate(group)
        aggregate.update(low=low, high=high)
        bins.append(aggregate)
    return {'edges': edges, 'bins': bins, 'other': _aggregate(other)}


def bin_and_aggregate(records, offset_bins=DEFAULT_OFFSET_BINS,
                      sparsity_bins=DEFAULT_SPARSITY_BINS):
    """Per-bin means of the metrics, by pose offset (degrees) and by sparsity
    (valid fraction). Bins are half-open `[low, high)`, except the last one
    which is closed; records outside every bin land in the `other` bucket of
    the corresponding table."""
    records = list(records)
    if not records:
        raise ValueError('`bin_and_aggregate` needs at least one record.')
    offset_bins = check_bin_edges(offset_bins, name='pose-offset')
    sparsity_bins = check_bin_edges(sparsity_bins, name='sparsity')

    return {
        'schema_version': REPORT_SCHEMA_VERSION,
        'records': [record.to_dict() for record in records],
        'overall': _aggregate(records),
        'by_pose_offset': _bin_records(records, 'pose_offset', offset_bins),
        'by_sparsity': _bin_records(records, 'valid_fraction', sparsity_bins),
    }
