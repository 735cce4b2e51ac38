import math
import numpy as np

from collections import namedtuple
from scipy.spatial.transform import Rotation, Slerp


ProjectedPoint = namedtuple('ProjectedPoint',
    ['pixel_x', 'pixel_y', 'depth', 'color', 'source_index'])


class CameraIntrinsics(object):
    """Intrinsic parameters of a pinhole camera.

    Pixel `i` has its center at the continuous image coordinate `i`, so that
    a projected point is assigned to the pixel `round(pixel_x)`.

    Parameters
    ----------
    fx, fy : float
        Focal lengths, in pixels.

    cx, cy : float
        Principal point, in pixels.

    width, height : int
        Size of the image, in pixels.
    """
    def __init__(self, fx, fy, cx, cy, width, height):
        fx, fy, cx, cy = float(fx), float(fy), float(cx), float(cy)
        if not all(math.isfinite(v) for v in (fx, fy, cx, cy)):
            raise ValueError('The intrinsic parameters must be finite, got '
                             '(fx={0}, fy={1}, cx={2}, cy={3}).'.format(fx, fy, cx, cy))
        if (fx <= 0) or (fy <= 0):
            raise ValueError('The focal lengths must be positive, got '
                             '(fx={0}, fy={1}).'.format(fx, fy))
        if (int(width) != width) or (int(height) != height):
            raise ValueError('The image size must be integer, got '
                             '{0}x{1}.'.format(width, height))
        if (width < 1) or (height < 1):
            raise ValueError('The image size must be at least 1x1, got '
                             '{0}x{1}.'.format(width, height))
        self.fx = fx
        self.fy = fy
        self.cx = cx
        self.cy = cy
        self.width = int(width)
        self.height = int(height)

    @classmethod
    def from_resolution(cls, resolution, focal_length=None):
        """Centered camera for an image of size `resolution = (height, width)`.
        The default focal length gives a horizontal field of view of 90°."""
        height, width = resolution
        if focal_length is None:
            focal_length = width / 2.
        return cls(focal_length, focal_length,
                   (width - 1) / 2., (height - 1) / 2., width, height)

    @property
    def K(self):
        return np.array([[self.fx, 0., self.cx],
                         [0., self.fy, self.cy],
                         [0., 0., 1.]])

    @property
    def resolution(self):
        return (self.height, self.width)

    def to_dict(self):
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
                'width': self.width, 'height': self.height}

    def __eq__(self, other):
        if not isinstance(other, CameraIntrinsics):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return ('CameraIntrinsics(fx={0}, fy={1}, cx={2}, cy={3}, width={4}, '
                'height={5})'.format(self.fx, self.fy, self.cx, self.cy,
                                     self.width, self.height))


class CameraPose(object):
    """Rigid world-to-camera transform `x_c = R x_w + t`.

    The camera frame follows the pinhole convention: `x` points right, `y`
    points down and `z` points forward.
    """
    def __init__(self, rotation, translation, atol=1e-9):
        rotation = np.array(rotation, dtype=np.float64)
        translation = np.array(translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3):
            raise ValueError('The rotation must be a 3x3 matrix, got shape '
                             '{0}.'.format(rotation.shape))
        if translation.shape != (3,):
            raise ValueError('The translation must be a 3-vector, got shape '
                             '{0}.'.format(translation.shape))
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ValueError('The pose must be finite.')
        error = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
        determinant = np.linalg.det(rotation)
        if (error > atol) or (abs(determinant - 1.) > atol):
            raise ValueError('The rotation is not orthonormal with determinant '
                             '+1 (max |R^T R - I| = {0:.3e}, det(R) = {1:.6f}, '
                             'tolerance {2}).'.format(error, determinant, atol))
        self.rotation = rotation
        self.translation = translation

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_extrinsic(cls, extrinsic):
        extrinsic = np.asarray(extrinsic, dtype=np.float64).reshape(4, 4)
        if not np.array_equal(extrinsic[3], [0., 0., 0., 1.]):
            raise ValueError('The last row of the extrinsic matrix must be '
                             '[0, 0, 0, 1], got {0}.'.format(extrinsic[3].tolist()))
        return cls(extrinsic[:3, :3], extrinsic[:3, 3])

    @classmethod
    def from_camera_to_world(cls, rotation, center):
        """Pose from the camera-to-world rotation and the camera center."""
        rotation = np.asarray(rotation, dtype=np.float64).T
        center = np.asarray(center, dtype=np.float64)
        return cls(rotation, -rotation @ center)

    @classmethod
    def from_yaw(cls, yaw, center=(0., 0., 0.)):
        """Camera at `center` with its optical axis turned by `yaw` degrees
        around the (downward) world `y` axis; positive yaw turns right."""
        return cls.from_camera_to_world(yaw_rotation(yaw), center)

    @property
    def extrinsic(self):
        extrinsic = np.eye(4)
        extrinsic[:3, :3] = self.rotation
        extrinsic[:3, 3] = self.translation
        return extrinsic

    @property
    def center(self):
        return -self.rotation.T @ self.translation

    @property
    def camera_to_world(self):
        return self.rotation.T

    @property
    def right_axis(self):
        """Camera `x` axis expressed in the world frame."""
        return self.rotation[0].copy()

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return 'CameraPose(rotation={0}, translation={1})'.format(
            self.rotation.tolist(), self.translation.tolist())


class ProjectedPoints(object):
    """Projections of a whole cloud, stored as arrays. Indexing returns a
    single `ProjectedPoint`."""
    def __init__(self, pixel_x, pixel_y, depth, colors, source_index):
        self.pixel_x = pixel_x
        self.pixel_y = pixel_y
        self.depth = depth
        self.colors = colors
        self.source_index = source_index

    def take(self, indices):
        return ProjectedPoints(self.pixel_x[indices],
                               self.pixel_y[indices],
                               self.depth[indices],
                               self.colors[indices],
                               self.source_index[indices])

    def pixels(self):
        """Integer pixel assignment (round half away from zero)."""
        return (round_half_away(self.pixel_x).astype(np.int64),
                round_half_away(self.pixel_y).astype(np.int64))

    def __getitem__(self, index):
        return ProjectedPoint(float(self.pixel_x[index]),
                              float(self.pixel_y[index]),
                              float(self.depth[index]),
                              tuple(self.colors[index].tolist()),
                              int(self.source_index[index]))

    def __iter__(self):
        for index in range(len(self)):
            yield self[index]

    def __len__(self):
        return self.depth.shape[0]


def yaw_rotation(yaw):
    """Camera-to-world rotation of a camera yawed by `yaw` degrees."""
    angle = math.radians(yaw)
    cos, sin = math.cos(angle), math.sin(angle)
    return np.array([[cos, 0., sin],
                     [0., 1., 0.],
                     [-sin, 0., cos]])


def round_half_away(values):
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(invalid='ignore'):
        return np.sign(values) * np.floor(np.abs(values) + 0.5)


def project_points(cloud, K, T):
    """Perspective projection of every point of `cloud` into the camera
    `(K, T)`, in cloud order. Points behind the camera are kept, with
    `depth <= 0`; rejecting them is the job of `validity_test`."""
    positions = np.asarray(cloud.positions, dtype=np.float64)
    camera_points = positions @ T.rotation.T + T.translation
    depth = camera_points[:, 2]
    with np.errstate(divide='ignore', invalid='ignore'):
        pixel_x = K.fx * camera_points[:, 0] / depth + K.cx
        pixel_y = K.fy * camera_points[:, 1] / depth + K.cy

    return ProjectedPoints(pixel_x, pixel_y, depth,
                           np.asarray(cloud.colors, dtype=np.float64),
                           np.arange(positions.shape[0], dtype=np.int64))


def back_project(pixel_x, pixel_y, depth, K, T):
    """Inverse pinhole map: world coordinates of the pixels `(pixel_x,
    pixel_y)` seen at camera-frame depth `depth`."""
    pixel_x = np.asarray(pixel_x, dtype=np.float64)
    pixel_y = np.asarray(pixel_y, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    camera_points = np.stack([(pixel_x - K.cx) / K.fx * depth,
                              (pixel_y - K.cy) / K.fy * depth,
                              depth], axis=-1)
    return (camera_points - T.translation) @ T.rotation


def validity_test(pt, K, winner_depth=None, winner_index=None):
    """The validity operator shared by reprojection, artifact masks and
    sparse references. A projected point is valid iff

      - its depth is positive,
      - its rounded pixel lies inside the image,
      - it is the front-most point of its pixel: its depth equals the
        z-buffer `winner_depth` (and, on exact depth ties, its source index
        equals `winner_index`, the smallest index among the tied points).

    `pt` is either a single `ProjectedPoint` (returns a `bool`) or a
    `ProjectedPoints` batch (returns a boolean array, with `winner_depth`
    and `winner_index` given per point).
    """
    depth = np.asarray(pt.depth, dtype=np.float64)
    pixel_x = round_half_away(pt.pixel_x)
    pixel_y = round_half_away(pt.pixel_y)
    with np.errstate(invalid='ignore'):
        valid = ((depth > 0)
                 & (pixel_x >= 0) & (pixel_x < K.width)
                 & (pixel_y >= 0) & (pixel_y < K.height))
        if winner_depth is not None:
            valid = valid & (depth == np.asarray(winner_depth, dtype=np.float64))
        if winner_index is not None:
            valid = valid & (np.asarray(pt.source_index) == np.asarray(winner_index))

    if valid.ndim == 0:
        return bool(valid)
    return valid


def make_extrapolated_pose(pose_a, pose_b, angle_fraction, lateral_offset):
    """Virtual camera between `pose_a` and `pose_b`, shifted sideways.

    The camera-to-world rotations are spherically interpolated at
    `angle_fraction`, the camera centers linearly interpolated, and the
    center is then moved by `lateral_offset` meters along the right axis of
    the interpolated camera (positive moves right).
    """
    angle_fraction = float(angle_fraction)
    lateral_offset = float(lateral_offset)
    if not math.isfinite(lateral_offset):
        raise ValueError('The lateral offset must be finite, got '
                         '{0}.'.format(lateral_offset))
    if not (0. <= angle_fraction <= 1.):
        raise ValueError('The angle fraction must be in [0, 1], got '
                         '{0}.'.format(angle_fraction))

    if lateral_offset == 0.:
        if angle_fraction == 0.:
            return CameraPose(pose_a.rotation, pose_a.translation)
        if angle_fraction == 1.:
            return CameraPose(pose_b.rotation, pose_b.translation)

    if angle_fraction == 0.:
        rotation = pose_a.camera_to_world
    elif angle_fraction == 1.:
        rotation = pose_b.camera_to_world
    else:
        rotations = Rotation.from_matrix(np.stack([pose_a.camera_to_world,
                                                   pose_b.camera_to_world]))
        slerp = Slerp([0., 1.], rotations)
        rotation = slerp([angle_fraction]).as_matrix()[0]
        # Re-orthonormalize the quaternion round-trip
        u, _, vt = np.linalg.svd(rotation)
        rotation = u @ vt

    center = ((1. - angle_fraction) * pose_a.center
              + angle_fraction * pose_b.center)
    center = center + lateral_offset * rotation[:, 0]

    return CameraPose.from_camera_to_world(rotation, center)


def pose_offset_degrees(pose_a, pose_b):
    """Geodesic angle between the orientations of two cameras, in [0, 180]."""
    relative = pose_a.rotation.T @ pose_b.rotation
    sin = 0.5 * np.linalg.norm([relative[2, 1] - relative[1, 2],
                                relative[0, 2] - relative[2, 0],
                                relative[1, 0] - relative[0, 1]])
    cos = 0.5 * (np.trace(relative) - 1.)
    return math.degrees(math.atan2(sin, cos))
