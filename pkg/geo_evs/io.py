import os
import json
import struct
import imageio
import torch
import numpy as np

from collections import OrderedDict

from geo_evs.artifact import ArtifactMask, MaskLibrary
from geo_evs.diffusion.denoiser import DenoiserModel
from geo_evs.diffusion.schedule import NoiseSchedule
from geo_evs.gar import ConditionMap
from geo_evs.geometry import CameraIntrinsics, CameraPose
from geo_evs.lpsr import REPORT_SCHEMA_VERSION, SparseReference
from geo_evs.scene import PointMap, Scene
from geo_evs.utils.torch_utils import vector_to_parameters

POINT_MAP_MAGIC = b'GPM1'
DEPTH_MAGIC = b'GDM1'
CHECKPOINT_MAGIC = b'GEVS'
MANIFEST_VERSION = 1
MASK_LIBRARY_VERSION = 1
SCENE_VERSION = 1

FORMAT_VERSIONS = OrderedDict([
    ('point_map', POINT_MAP_MAGIC.decode('ascii')),
    ('depth', DEPTH_MAGIC.decode('ascii')),
    ('checkpoint', CHECKPOINT_MAGIC.decode('ascii')),
    ('manifest', MANIFEST_VERSION),
    ('mask_library', MASK_LIBRARY_VERSION),
    ('report', REPORT_SCHEMA_VERSION),
    ('scene', SCENE_VERSION),
])

_HEADER = struct.Struct('<4sII')
_LENGTH = struct.Struct('<I')


class FormatError(ValueError):
    """Malformed file. Carries the path and either the byte offset (binary
    formats) or the JSON path (JSON formats) of the problem."""
    def __init__(self, message, path=None, offset=None, json_path=None):
        location = []
        if path is not None:
            location.append(str(path))
        if offset is not None:
            location.append('byte {0}'.format(offset))
        if json_path is not None:
            location.append(json_path)
        if location:
            message = '{0}: {1}'.format(', '.join(location), message)
        super(FormatError, self).__init__(message)
        self.path = path
        self.offset = offset
        self.json_path = json_path


class CameraFormatError(FormatError):
    pass


class PointMapFormatError(FormatError):
    pass


class DepthFormatError(FormatError):
    pass


class ImageFormatError(FormatError):
    pass


class CheckpointFormatError(FormatError):
    pass


class ManifestFormatError(FormatError):
    pass


class MaskLibraryFormatError(FormatError):
    pass


class ReportFormatError(FormatError):
    pass


class SceneFormatError(FormatError):
    pass


def _read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


def _write_bytes(path, data):
    with open(path, 'wb') as f:
        f.write(data)


def _read_json(path, error_cls):
    with open(path, 'r') as f:
        try:
            return json.load(f)
        except ValueError as exception:
            raise error_cls('invalid JSON ({0})'.format(exception),
                            path=path, json_path='$')


def _write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def _get(data, key, error_cls, path, json_path='$'):
    if not isinstance(data, dict):
        raise error_cls('expected an object', path=path, json_path=json_path)
    if key not in data:
        raise error_cls('missing key `{0}`'.format(key), path=path,
                        json_path='{0}.{1}'.format(json_path, key))
    return data[key]


def _check_version(data, expected, error_cls, path, key='version'):
    version = _get(data, key, error_cls, path)
    if version != expected:
        raise error_cls('unsupported version {0} (expected {1})'.format(
                        version, expected), path=path, json_path='$.' + key)


# Cameras

CAMERA_KEYS = ('fx', 'fy', 'cx', 'cy', 'width', 'height', 'extrinsic')


def camera_to_dict(K, T):
    """Flat camera record: the intrinsics and the 4x4 world-to-camera
    extrinsic matrix as 16 row-major floats."""
    data = K.to_dict()
    data['extrinsic'] = T.extrinsic.reshape(-1).tolist()
    return data


def write_camera(path, K, T):
    _write_json(path, camera_to_dict(K, T))


def read_camera(path):
    """Returns the `(K, T)` pair stored in a camera JSON file."""
    data = _read_json(path, CameraFormatError)
    values = dict((key, _get(data, key, CameraFormatError, path))
                  for key in CAMERA_KEYS)
    extrinsic = values.pop('extrinsic')
    try:
        K = CameraIntrinsics(**values)
    except (TypeError, ValueError) as exception:
        raise CameraFormatError(str(exception), path=path, json_path='$')

    if not (isinstance(extrinsic, list) and (len(extrinsic) == 16)):
        raise CameraFormatError('expected 16 row-major floats', path=path,
                                json_path='$.extrinsic')
    try:
        T = CameraPose.from_extrinsic(extrinsic)
    except (TypeError, ValueError) as exception:
        raise CameraFormatError(str(exception), path=path, json_path='$.extrinsic')
    return K, T


# Binary rasters

def _pack_raster(magic, values, validity):
    height, width = validity.shape
    return b''.join([_HEADER.pack(magic, width, height),
                     np.ascontiguousarray(values, dtype='<f4').tobytes(),
                     np.ascontiguousarray(validity, dtype=np.uint8).tobytes()])


def _unpack_raster(data, magic, channels, error_cls, path):
    if len(data) < _HEADER.size:
        raise error_cls('truncated header: expected {0} bytes, got {1}'.format(
                        _HEADER.size, len(data)), path=path, offset=len(data))
    file_magic, width, height = _HEADER.unpack_from(data, 0)
    if file_magic != magic:
        raise error_cls('bad magic {0!r} (expected {1!r})'.format(file_magic,
                        magic), path=path, offset=0)
    if (width < 1) or (height < 1):
        raise error_cls('invalid size {0}x{1}'.format(width, height),
                        path=path, offset=4)

    num_values = height * width * channels
    expected = _HEADER.size + 4 * num_values + height * width
    if len(data) != expected:
        raise error_cls('expected {0} bytes, got {1}'.format(expected, len(data)),
                        path=path, offset=min(len(data), expected))

    offset = _HEADER.size
    values = np.frombuffer(data, dtype='<f4', count=num_values, offset=offset)
    offset += 4 * num_values
    validity = np.frombuffer(data, dtype=np.uint8, count=height * width,
                             offset=offset)
    invalid = np.flatnonzero(validity > 1)
    if invalid.size:
        raise error_cls('validity values must be 0 or 1', path=path,
                        offset=offset + int(invalid[0]))
    shape = (height, width, channels) if channels > 1 else (height, width)
    return (values.astype(np.float64).reshape(shape),
            validity.astype(bool).reshape(height, width))


def point_map_to_bytes(point_map):
    return _pack_raster(POINT_MAP_MAGIC, point_map.points, point_map.validity)


def point_map_from_bytes(data, path=None):
    points, validity = _unpack_raster(data, POINT_MAP_MAGIC, 3,
                                      PointMapFormatError, path)
    try:
        return PointMap(points, validity)
    except ValueError as exception:
        raise PointMapFormatError(str(exception), path=path,
                                  offset=_HEADER.size)


def write_point_map(path, point_map):
    _write_bytes(path, point_map_to_bytes(point_map))


def read_point_map(path):
    return point_map_from_bytes(_read_bytes(path), path=path)


def depth_to_bytes(depth, validity):
    validity = np.asarray(validity, dtype=bool)
    return _pack_raster(DEPTH_MAGIC, np.where(validity, depth, 0.), validity)


def depth_from_bytes(data, path=None):
    """Returns the `(depth, validity)` maps of a depth sidecar."""
    depth, validity = _unpack_raster(data, DEPTH_MAGIC, 1, DepthFormatError, path)
    if not np.all(np.isfinite(depth)) or np.any(depth[validity] <= 0):
        raise DepthFormatError('valid depths must be finite and positive',
                               path=path, offset=_HEADER.size)
    return depth, validity


def write_depth(path, depth, validity):
    _write_bytes(path, depth_to_bytes(depth, validity))


def read_depth(path):
    return depth_from_bytes(_read_bytes(path), path=path)


# PNG images

def to_uint8(image):
    image = np.asarray(image, dtype=np.float64)
    return np.floor(np.clip(image, 0., 1.) * 255. + 0.5).astype(np.uint8)


def write_image(path, image):
    """8-bit RGB PNG, values in [0, 1] mapped to `floor(255 x + 0.5)`."""
    image = np.asarray(image)
    if (image.ndim != 3) or (image.shape[2] != 3):
        raise ValueError('Expected a HxWx3 image, got shape {0}.'.format(image.shape))
    imageio.imwrite(path, to_uint8(image))


def read_image(path):
    try:
        image = np.asarray(imageio.imread(path))
    except (ValueError, OSError) as exception:
        if not os.path.exists(path):
            raise
        raise ImageFormatError('unreadable PNG ({0})'.format(exception),
                               path=path, offset=0)
    if (image.dtype != np.uint8) or (image.ndim != 3) or (image.shape[2] not in (3, 4)):
        raise ImageFormatError('expected an 8-bit RGB image, got {0} of shape '
                               '{1}'.format(image.dtype, image.shape),
                               path=path, offset=0)
    return image[..., :3].astype(np.float64) / 255.


def write_mask(path, mask):
    """Grayscale PNG mask, 255 for valid and 0 for invalid pixels."""
    mask = np.asarray(mask).astype(bool)
    imageio.imwrite(path, mask.astype(np.uint8) * 255)


def read_mask(path):
    try:
        mask = np.asarray(imageio.imread(path))
    except (ValueError, OSError) as exception:
        if not os.path.exists(path):
            raise
        raise ImageFormatError('unreadable PNG ({0})'.format(exception),
                               path=path, offset=0)
    if (mask.dtype != np.uint8) or (mask.ndim != 2):
        raise ImageFormatError('expected an 8-bit grayscale mask, got {0} of '
                               'shape {1}'.format(mask.dtype, mask.shape),
                               path=path, offset=0)
    if not np.all((mask == 0) | (mask == 255)):
        raise ImageFormatError('mask values must be 0 or 255', path=path,
                               offset=0)
    return mask == 255


# Condition maps and sparse references, stored under a common prefix

def write_condition(prefix, condition):
    write_image(prefix + '.png', condition.rgb)
    write_mask(prefix + '.mask.png', condition.validity)
    write_depth(prefix + '.depth', condition.depth, condition.validity)


def read_condition(prefix):
    rgb = read_image(prefix + '.png')
    validity = read_mask(prefix + '.mask.png')
    depth, depth_validity = read_depth(prefix + '.depth')
    if not np.array_equal(validity, depth_validity):
        raise DepthFormatError('the depth validity does not match the mask '
                               '{0}'.format(prefix + '.mask.png'),
                               path=prefix + '.depth', offset=_HEADER.size)
    try:
        return ConditionMap(rgb, validity, depth)
    except ValueError as exception:
        raise ImageFormatError(str(exception), path=prefix + '.png', offset=0)


def write_sparse_reference(prefix, reference):
    write_image(prefix + '.png', reference.reference)
    write_mask(prefix + '.mask.png', reference.mask)


def read_sparse_reference(prefix):
    return SparseReference(read_image(prefix + '.png'),
                           read_mask(prefix + '.mask.png'))


# Model checkpoints

def checkpoint_to_bytes(model, schedule=None):
    """`GEVS` | u32 descriptor length | descriptor JSON | float64 parameters."""
    descriptor = {'architecture': dict(model.architecture),
                  'num_parameters': model.num_parameters,
                  'schedule': None if (schedule is None) else schedule.to_dict()}
    blob = json.dumps(descriptor, sort_keys=True).encode('utf-8')
    params = np.concatenate([param.detach().cpu().numpy().reshape(-1)
                             for param in model.parameters()])
    return b''.join([CHECKPOINT_MAGIC, _LENGTH.pack(len(blob)), blob,
                     params.astype('<f8').tobytes()])


def checkpoint_from_bytes(data, path=None):
    """Returns the `(model, schedule)` pair of a checkpoint (`schedule` is
    `None` when the checkpoint does not record it)."""
    header = len(CHECKPOINT_MAGIC) + _LENGTH.size
    if len(data) < header:
        raise CheckpointFormatError('truncated header: expected {0} bytes, got '
                                    '{1}'.format(header, len(data)),
                                    path=path, offset=len(data))
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError('bad magic {0!r} (expected {1!r})'.format(
                                    data[:4], CHECKPOINT_MAGIC), path=path, offset=0)
    length, = _LENGTH.unpack_from(data, 4)
    if len(data) < header + length:
        raise CheckpointFormatError('truncated descriptor: expected {0} bytes, '
                                    'got {1}'.format(header + length, len(data)),
                                    path=path, offset=len(data))
    try:
        descriptor = json.loads(data[header:header + length].decode('utf-8'))
        model = DenoiserModel(**descriptor['architecture'])
    except (ValueError, KeyError, TypeError) as exception:
        raise CheckpointFormatError('invalid architecture descriptor '
                                    '({0})'.format(exception), path=path,
                                    offset=header)

    offset = header + length
    expected = offset + 8 * model.num_parameters
    if len(data) != expected:
        raise CheckpointFormatError('expected {0} bytes for {1} parameters, got '
                                    '{2}'.format(expected, model.num_parameters,
                                                 len(data)),
                                    path=path, offset=min(len(data), expected))
    params = np.frombuffer(data, dtype='<f8', count=model.num_parameters,
                           offset=offset)
    if not np.all(np.isfinite(params)):
        raise CheckpointFormatError('non-finite parameter', path=path,
            offset=offset + 8 * int(np.flatnonzero(~np.isfinite(params))[0]))
    vector_to_parameters(torch.from_numpy(params.astype(np.float64)),
                         model.parameters())

    schedule = descriptor.get('schedule')
    if schedule is not None:
        schedule = NoiseSchedule(num_train_steps=schedule['t_train'],
                                 beta_start=schedule['beta_start'],
                                 beta_end=schedule['beta_end'])
    return model, schedule


def write_checkpoint(path, model, schedule=None):
    _write_bytes(path, checkpoint_to_bytes(model, schedule=schedule))


def read_checkpoint(path):
    return checkpoint_from_bytes(_read_bytes(path), path=path)


# Dataset manifests

class DatasetManifest(object):
    """Dataset directory index. Entries are keyed by `(scene, view)` and
    hold file names relative to `root`: `camera`, `image`, `pointmap`, and
    the optional `condition` and `reference` prefixes."""
    REQUIRED = ('scene', 'view', 'camera', 'image', 'pointmap')
    OPTIONAL = ('condition', 'reference', 'depth')

    def __init__(self, root, entries, metadata=None):
        self.root = root
        self.entries = []
        keys = set()
        for index, entry in enumerate(entries):
            missing = [key for key in self.REQUIRED if key not in entry]
            if missing:
                raise ValueError('Entry {0} misses the keys {1}.'.format(index,
                                                                        missing))
            key = (entry['scene'], entry['view'])
            if key in keys:
                raise ValueError('Duplicate entry (scene={0}, view={1}).'.format(*key))
            keys.add(key)
            self.entries.append(dict(entry))
        self.metadata = dict(metadata or {})

    def path(self, name):
        return os.path.join(self.root, name)

    def find(self, scene, view):
        for entry in self.entries:
            if (entry['scene'], entry['view']) == (scene, view):
                return entry
        raise KeyError('No entry (scene={0}, view={1}).'.format(scene, view))

    @property
    def scenes(self):
        return sorted(set(entry['scene'] for entry in self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def write_manifest(path, manifest):
    _write_json(path, {'version': MANIFEST_VERSION,
                       'metadata': manifest.metadata,
                       'entries': manifest.entries})


def read_manifest(path):
    """Load a manifest, checking that every referenced file exists."""
    data = _read_json(path, ManifestFormatError)
    _check_version(data, MANIFEST_VERSION, ManifestFormatError, path)
    entries = _get(data, 'entries', ManifestFormatError, path)
    if not isinstance(entries, list):
        raise ManifestFormatError('expected a list', path=path,
                                  json_path='$.entries')
    root = os.path.dirname(os.path.abspath(path))

    keys = set()
    for index, entry in enumerate(entries):
        json_path = '$.entries[{0}]'.format(index)
        for key in DatasetManifest.REQUIRED:
            _get(entry, key, ManifestFormatError, path, json_path=json_path)
        if (entry['scene'], entry['view']) in keys:
            raise ManifestFormatError('duplicate (scene, view) key', path=path,
                                      json_path=json_path)
        keys.add((entry['scene'], entry['view']))

        files = [(key, entry[key]) for key in ('camera', 'image', 'pointmap')]
        if entry.get('depth') is not None:
            files.append(('depth', entry['depth']))
        for prefix_key in ('condition', 'reference'):
            if entry.get(prefix_key) is not None:
                files.append((prefix_key, entry[prefix_key] + '.png'))
                files.append((prefix_key, entry[prefix_key] + '.mask.png'))
        if entry.get('condition') is not None:
            files.append(('condition', entry['condition'] + '.depth'))
        for key, name in files:
            if not os.path.isfile(os.path.join(root, name)):
                raise ManifestFormatError('missing file `{0}`'.format(name),
                    path=path, json_path='{0}.{1}'.format(json_path, key))

    return DatasetManifest(root, entries, metadata=data.get('metadata'))


# Mask libraries

def write_mask_library(directory, library):
    if not os.path.exists(directory):
        os.makedirs(directory)
    masks = []
    for index, mask in enumerate(library.masks):
        filename = 'mask_{0:04d}.png'.format(index)
        write_mask(os.path.join(directory, filename), mask.mask)
        masks.append({'file': filename, 'provenance': mask.provenance})
    _write_json(os.path.join(directory, 'manifest.json'),
                {'version': MASK_LIBRARY_VERSION,
                 'config': library.config,
                 'masks': masks})


def read_mask_library(directory):
    path = os.path.join(directory, 'manifest.json')
    data = _read_json(path, MaskLibraryFormatError)
    _check_version(data, MASK_LIBRARY_VERSION, MaskLibraryFormatError, path)
    items = _get(data, 'masks', MaskLibraryFormatError, path)
    if not (isinstance(items, list) and items):
        raise MaskLibraryFormatError('expected a nonempty list', path=path,
                                     json_path='$.masks')
    masks = []
    for index, item in enumerate(items):
        json_path = '$.masks[{0}]'.format(index)
        filename = _get(item, 'file', MaskLibraryFormatError, path,
                        json_path=json_path)
        masks.append(ArtifactMask(read_mask(os.path.join(directory, filename)),
                                  provenance=item.get('provenance')))
    try:
        return MaskLibrary(masks, config=data.get('config'))
    except ValueError as exception:
        raise MaskLibraryFormatError(str(exception), path=path,
                                     json_path='$.masks')


# Metric reports

def write_report(path, report):
    _write_json(path, report)


def read_report(path):
    data = _read_json(path, ReportFormatError)
    _check_version(data, REPORT_SCHEMA_VERSION, ReportFormatError, path,
                   key='schema_version')
    return data


# Scene descriptors

def write_scene(path, scene):
    data = scene.to_dict()
    data['version'] = SCENE_VERSION
    _write_json(path, data)


def read_scene(path):
    data = _read_json(path, SceneFormatError)
    _check_version(data, SCENE_VERSION, SceneFormatError, path)
    _get(data, 'primitives', SceneFormatError, path)
    try:
        return Scene.from_dict(data)
    except (KeyError, TypeError, ValueError) as exception:
        raise SceneFormatError(str(exception), path=path, json_path='$.primitives')
