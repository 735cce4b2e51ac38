import numpy as np

from geo_evs import gar
from geo_evs.geometry import CameraPose, make_extrapolated_pose, yaw_rotation
from geo_evs.gar import ConditionMap
from geo_evs.scene import render_scene

DEFAULT_P_INJECT = 0.4


class ArtifactMask(object):
    """Binary validity mask (`True` = kept, `False` = dropped), with a
    provenance record: `{'type': 'reprojection', ...pose descriptor}` or
    `{'type': 'random-box', 'seed': ...}`."""
    def __init__(self, mask, provenance=None):
        mask = np.asarray(mask)
        if mask.ndim != 2:
            raise ValueError('Expected a HxW mask, got shape {0}.'.format(mask.shape))
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise ValueError('The mask values must be in {0, 1}.')
            mask = mask.astype(bool)
        self.mask = mask
        self.provenance = dict(provenance or {})

    @property
    def resolution(self):
        return self.mask.shape

    @property
    def drop_fraction(self):
        return 1. - float(np.mean(self.mask))


class MaskLibrary(object):
    """Precomputed, ordered artifact-mask library sharing one resolution."""
    def __init__(self, masks, config=None):
        masks = list(masks)
        if not masks:
            raise ValueError('A mask library needs at least one mask.')
        resolution = masks[0].resolution
        for index, mask in enumerate(masks):
            if mask.resolution != resolution:
                raise ValueError('Mask {0} has resolution {1}, expected '
                                 '{2}.'.format(index, mask.resolution, resolution))
        self.masks = masks
        self.config = dict(config or {})

    @property
    def resolution(self):
        return self.masks[0].resolution

    @property
    def coverage(self):
        return np.array([1. - mask.drop_fraction for mask in self.masks])

    def __getitem__(self, index):
        return self.masks[index]

    def __len__(self):
        return len(self.masks)


def yawed_pose(pose, yaw):
    """`pose` turned in place by `yaw` degrees around the world vertical."""
    rotation = pose.camera_to_world @ yaw_rotation(yaw)
    return CameraPose.from_camera_to_world(rotation, pose.center)


def build_mask_library(scenes, source_cameras, virtual_offsets, resolution,
                       seed, max_yaw=45.):
    """Harvest the validity maps of virtual-pose reprojections.

    For every scene, source camera `(K, T)` and virtual offset
    `(angle_fraction, lateral_offset)`, the source view is rendered, lifted
    to a cloud and rasterized at `make_extrapolated_pose(T, T', f, d)`,
    where `T'` is `T` yawed by `max_yaw` degrees. A seeded draw picks the
    direction (left or right) of each virtual camera. The validity channel of
    the rasterization is kept verbatim as the mask.
    """
    scenes, source_cameras = list(scenes), list(source_cameras)
    virtual_offsets = [tuple(offset) for offset in virtual_offsets]
    if not scenes:
        raise ValueError('`build_mask_library` needs at least one scene.')
    if not virtual_offsets:
        raise ValueError('`build_mask_library` needs at least one virtual offset.')
    resolution = tuple(resolution)
    rng = np.random.default_rng(seed)

    masks = []
    for scene_index, scene in enumerate(scenes):
        for camera_index, (K, T) in enumerate(source_cameras):
            if K.resolution != resolution:
                raise ValueError('Source camera {0} has resolution {1}, expected '
                                 '{2}.'.format(camera_index, K.resolution, resolution))
            view = render_scene(scene, K, T)
            if not np.any(view.finite_mask):
                continue
            for angle_fraction, lateral_offset in virtual_offsets:
                direction = 1. if (rng.random() < 0.5) else -1.
                target = make_extrapolated_pose(T,
                    yawed_pose(T, direction * max_yaw),
                    angle_fraction, direction * lateral_offset)
                condition = gar.build_condition(view, K, target)
                masks.append(ArtifactMask(condition.validity, provenance={
                    'type': 'reprojection',
                    'scene': scene_index,
                    'camera': camera_index,
                    'angle_fraction': float(angle_fraction),
                    'lateral_offset': float(lateral_offset),
                    'direction': direction,
                }))

    if not masks:
        raise ValueError('No artifact mask could be generated.')
    config = {'virtual_offsets': [list(offset) for offset in virtual_offsets],
              'max_yaw': max_yaw, 'seed': seed,
              'num_scenes': len(scenes), 'num_cameras': len(source_cameras)}
    return MaskLibrary(masks, config=config)


def make_random_box_mask(resolution, target_drop_fraction, seed):
    """Union of seeded axis-aligned boxes, dropped until the dropped fraction
    first reaches `target_drop_fraction`. Box sides are uniform in
    [H/16, H/3] (resp. W) and positions are uniform."""
    if not (0. < target_drop_fraction < 1.):
        raise ValueError('The target drop fraction must be in (0, 1), got '
                         '{0}.'.format(target_drop_fraction))
    height, width = resolution
    rng = np.random.default_rng(seed)
    min_height, min_width = max(1, height // 16), max(1, width // 16)
    max_height, max_width = max(min_height, height // 3), max(min_width, width // 3)

    mask = np.ones((height, width), dtype=bool)
    num_pixels = float(height * width)
    while (np.count_nonzero(~mask) / num_pixels) < target_drop_fraction:
        box_height = rng.integers(min_height, max_height + 1)
        box_width = rng.integers(min_width, max_width + 1)
        top = rng.integers(0, height - box_height + 1)
        left = rng.integers(0, width - box_width + 1)
        mask[top:top + box_height, left:left + box_width] = False

    return ArtifactMask(mask, provenance={'type': 'random-box', 'seed': seed,
        'target_drop_fraction': float(target_drop_fraction)})


def make_random_box_library(resolution, drop_fractions, seed):
    """Random-box library with one mask per requested drop fraction (drop
    fractions outside (0, 1) are clipped into it)."""
    seeds = np.random.SeedSequence(seed).generate_state(len(drop_fractions))
    masks = []
    for fraction, mask_seed in zip(drop_fractions, seeds):
        fraction = float(np.clip(fraction, 1e-3, 1. - 1e-3))
        masks.append(make_random_box_mask(resolution, fraction, int(mask_seed)))
    return MaskLibrary(masks, config={'type': 'random-box', 'seed': seed})


def apply_mask(x, mask):
    """`x ⊙ a` on rgb, validity and depth."""
    keep = np.asarray(mask, dtype=bool)
    validity = x.validity & keep
    return ConditionMap(np.where(validity[..., None], x.rgb, 0.),
                        validity,
                        np.where(validity, x.depth, 0.))


def inject_artifact(x, library, p, rng):
    """Two-stage artifact injection: a Bernoulli(`p`) gate, then a mask drawn
    uniformly from `library` and multiplied into the condition map.

    Returns the (possibly) perturbed condition map and the index of the
    applied mask (`None` when the gate is closed)."""
    if not (0. <= p <= 1.):
        raise ValueError('The injection probability must be in [0, 1], got '
                         '{0}.'.format(p))
    if library.resolution != x.resolution:
        raise ValueError('The mask library has resolution {0}, but the '
                         'condition map has resolution {1}.'.format(
                         library.resolution, x.resolution))
    if rng.random() >= p:
        return x, None
    index = int(rng.integers(len(library)))
    return apply_mask(x, library[index].mask), index
