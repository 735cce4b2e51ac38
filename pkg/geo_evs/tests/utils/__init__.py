import numpy as np

from geo_evs.gar import ColoredPointCloud
from geo_evs.geometry import CameraIntrinsics, CameraPose, round_half_away
from geo_evs.scene import Box, Scene, generate_scene, render_scene


HEIGHT, WIDTH = 16, 16

def make_unittest_camera(resolution=(HEIGHT, WIDTH), yaw=0., center=(0., 0., 0.)):
    K = CameraIntrinsics.from_resolution(resolution)
    return K, CameraPose.from_yaw(yaw, center=center)

def make_unittest_view(seed=0, resolution=(HEIGHT, WIDTH), complexity=4, yaw=0.):
    K, T = make_unittest_camera(resolution=resolution, yaw=yaw)
    return render_scene(generate_scene(seed, complexity), K, T)

def make_wall_scene(depth=5., albedo=(0.2, 0.4, 0.6)):
    """A wall filling the whole field of view of a front camera at the
    origin."""
    return Scene([Box((0., 0., depth + 0.5), (1000., 1000., 1.), albedo)])

def make_random_cloud(rng, num_points, num_ties=0):
    """Random colored cloud in front of a camera at the origin, with some
    points behind it or outside the frustum. The last `num_ties` points
    duplicate earlier positions (exact depth ties) with other colors."""
    num_unique = num_points - num_ties
    positions = np.stack([rng.uniform(-6., 6., size=num_unique),
                          rng.uniform(-6., 6., size=num_unique),
                          rng.uniform(-1., 8., size=num_unique)], axis=1)
    if num_ties:
        duplicates = rng.integers(num_unique, size=num_ties)
        positions = np.concatenate([positions, positions[duplicates]], axis=0)
    colors = rng.integers(0, 256, size=(num_points, 3)) / 255.
    return ColoredPointCloud(positions, colors)

def brute_force_rasterize(points, K):
    """Per-pixel scan of every projected point: O(N.H.W). Returns the rgb,
    validity and depth arrays of the rasterization."""
    rgb = np.zeros((K.height, K.width, 3))
    validity = np.zeros((K.height, K.width), dtype=bool)
    depth = np.zeros((K.height, K.width))
    pixel_x = round_half_away(points.pixel_x)
    pixel_y = round_half_away(points.pixel_y)
    for y in range(K.height):
        for x in range(K.width):
            best = None
            for i in np.flatnonzero((pixel_x == x) & (pixel_y == y)):
                if not (points.depth[i] > 0):
                    continue
                if (best is None) or (points.depth[i] < points.depth[best]):
                    best = i
            if best is not None:
                rgb[y, x] = points.colors[best]
                validity[y, x] = True
                depth[y, x] = points.depth[best]
    return rgb, validity, depth
