import numpy as np

from concurrent.futures import ThreadPoolExecutor

from geo_evs import geometry
from geo_evs.scene import PointMap, view_to_point_map


class ColoredPointCloud(object):
    """World-frame points with RGB colors, in row-major pixel order of the
    point map they were lifted from."""
    def __init__(self, positions, colors):
        positions = np.asarray(positions, dtype=np.float64)
        colors = np.asarray(colors, dtype=np.float64)
        if (positions.ndim != 2) or (positions.shape[1] != 3):
            raise ValueError('Expected Nx3 positions, got shape '
                             '{0}.'.format(positions.shape))
        if colors.shape != positions.shape:
            raise ValueError('The colors of shape {0} do not match the positions '
                             'of shape {1}.'.format(colors.shape, positions.shape))
        if positions.shape[0] < 1:
            raise ValueError('A point cloud needs at least one point.')
        if not np.all(np.isfinite(positions)):
            raise ValueError('The positions must be finite.')
        if not np.all((colors >= 0) & (colors <= 1)):
            raise ValueError('The colors must be in [0, 1].')
        self.positions = positions
        self.colors = colors

    def __len__(self):
        return self.positions.shape[0]


class ConditionMap(object):
    """Sparse RGB raster with explicit validity. Invalid pixels are zero-filled
    (rgb and depth), valid pixels carry a positive depth."""
    def __init__(self, rgb, validity, depth):
        rgb = np.asarray(rgb, dtype=np.float64)
        validity = np.asarray(validity).astype(bool)
        depth = np.asarray(depth, dtype=np.float64)
        if (rgb.ndim != 3) or (rgb.shape[2] != 3):
            raise ValueError('Expected a HxWx3 condition map, got shape '
                             '{0}.'.format(rgb.shape))
        if (validity.shape != rgb.shape[:2]) or (depth.shape != rgb.shape[:2]):
            raise ValueError('The validity {0} and depth {1} do not match the '
                             'condition map {2}.'.format(validity.shape,
                                                         depth.shape, rgb.shape))
        if np.any(rgb[~validity] != 0):
            raise ValueError('The condition map is not zero-filled on its '
                             'invalid pixels.')
        if not np.all(depth[validity] > 0):
            raise ValueError('Every valid pixel must have a positive depth.')
        self.rgb = rgb
        self.validity = validity
        self.depth = np.where(validity, depth, 0.)

    @classmethod
    def empty(cls, resolution):
        height, width = resolution
        return cls(np.zeros((height, width, 3)),
                   np.zeros((height, width), dtype=bool),
                   np.zeros((height, width)))

    @property
    def resolution(self):
        return self.validity.shape

    @property
    def valid_fraction(self):
        return float(np.mean(self.validity))

    def __eq__(self, other):
        if not isinstance(other, ConditionMap):
            return NotImplemented
        return (np.array_equal(self.rgb, other.rgb)
                and np.array_equal(self.validity, other.validity)
                and np.array_equal(self.depth, other.depth))


def point_map_to_cloud(point_map, image):
    """Colored cloud with one point per valid pixel of `point_map`."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != point_map.resolution:
        raise ValueError('The image of shape {0} does not match the point map '
                         'of resolution {1}.'.format(image.shape,
                                                     point_map.resolution))
    if not np.any(point_map.validity):
        raise ValueError('The point map has no valid pixel.')
    return ColoredPointCloud(point_map.points[point_map.validity],
                             image[point_map.validity])


def _zbuffer(points, K):
    """Per-pixel (minimum depth, smallest source index among the minimum
    depths) over the candidates of `points`."""
    num_pixels = K.height * K.width
    depth_buffer = np.full(num_pixels, np.inf)
    index_buffer = np.full(num_pixels, np.iinfo(np.int64).max, dtype=np.int64)

    candidates = geometry.validity_test(points, K)
    if not np.any(candidates):
        return depth_buffer, index_buffer
    points = points.take(np.flatnonzero(candidates))
    pixel_x, pixel_y = points.pixels()
    pixels = pixel_y * K.width + pixel_x

    np.minimum.at(depth_buffer, pixels, points.depth)
    front = geometry.validity_test(points, K, winner_depth=depth_buffer[pixels])
    np.minimum.at(index_buffer, pixels[front], points.source_index[front])

    return depth_buffer, index_buffer


def _merge_zbuffers(buffers):
    depth_buffer, index_buffer = buffers[0]
    for depths, indices in buffers[1:]:
        closer = depths < depth_buffer
        tied = (depths == depth_buffer)
        index_buffer = np.where(closer, indices,
            np.where(tied, np.minimum(index_buffer, indices), index_buffer))
        depth_buffer = np.minimum(depth_buffer, depths)
    return depth_buffer, index_buffer


def rasterize(cloud, K, T, num_workers=1):
    """Z-buffer rasterization of `cloud` into the camera `(K, T)`.

    Every point lands on exactly one pixel. Among the points that pass the
    validity operator on a pixel, the one with minimum depth wins, and exact
    depth ties go to the smallest source index. The reduction is split over
    `num_workers` chunks of points and merged with the same (depth, index)
    order, so the output does not depend on `num_workers`.
    """
    points = geometry.project_points(cloud, K, T)

    num_workers = max(1, min(int(num_workers), len(points)))
    if num_workers == 1:
        depth_buffer, index_buffer = _zbuffer(points, K)
    else:
        chunks = np.array_split(np.arange(len(points)), num_workers)
        with ThreadPoolExecutor(max_workers=num_workers) as executor:
            buffers = list(executor.map(
                lambda chunk: _zbuffer(points.take(chunk), K), chunks))
        depth_buffer, index_buffer = _merge_zbuffers(buffers)

    covered = np.isfinite(depth_buffer)
    winners = index_buffer[covered]
    # Only the z-buffer winners survive the full validity operator
    survivors = geometry.validity_test(points.take(winners), K,
                                       winner_depth=depth_buffer[covered],
                                       winner_index=winners)
    assert np.all(survivors)

    rgb = np.zeros((K.height * K.width, 3))
    depth = np.zeros(K.height * K.width)
    rgb[covered] = points.colors[winners]
    depth[covered] = depth_buffer[covered]

    return ConditionMap(rgb.reshape(K.height, K.width, 3),
                        covered.reshape(K.height, K.width),
                        depth.reshape(K.height, K.width))


def build_condition(source, target_K, target_T, num_workers=1, image=None):
    """Geometry-aware reprojection of an observed view into a target camera:
    lift the view to a colored cloud and rasterize it.

    `source` is either a `RenderedView` (lifted with its depth) or a
    `PointMap`, in which case its colors are given by `image`.

    This is the single condition-building path shared by training pairs
    (target = source camera) and extrapolated inference conditions."""
    if isinstance(source, PointMap):
        if image is None:
            raise ValueError('A point-map source needs its image.')
        point_map = source
    else:
        point_map, image = view_to_point_map(source), source.rgb
    if target_K.resolution != point_map.resolution:
        raise ValueError('The target resolution {0} differs from the source '
                         'resolution {1}; resampling is not supported.'.format(
                         target_K.resolution, point_map.resolution))
    cloud = point_map_to_cloud(point_map, image)
    return rasterize(cloud, target_K, target_T, num_workers=num_workers)


def make_training_pair(scene_view, target_K, target_T, target_truth=None,
                       num_workers=1):
    """Condition map of `scene_view` at the target camera, paired with the
    supervision image `target_truth.rgb` when it is available."""
    if target_truth is not None:
        if (target_truth.intrinsics != target_K) or (target_truth.pose != target_T):
            raise ValueError('The supervision view was not rendered at the '
                             'target camera.')
    condition = build_condition(scene_view, target_K, target_T,
                                num_workers=num_workers)
    supervision = None if (target_truth is None) else target_truth.rgb
    return condition, supervision
