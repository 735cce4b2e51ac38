import numpy as np

from geo_evs.geometry import back_project

BACKGROUND_COLOR = (153 / 255., 191 / 255., 230 / 255.)
GROUND_HEIGHT = 1.5


def _as_albedo(albedo):
    albedo = np.array(albedo, dtype=np.float64).reshape(-1)
    if albedo.shape != (3,):
        raise ValueError('The albedo must be an RGB triple, got shape '
                         '{0}.'.format(albedo.shape))
    if not (np.all(np.isfinite(albedo)) and np.all((albedo >= 0) & (albedo <= 1))):
        raise ValueError('The albedo components must be in [0, 1], got '
                         '{0}.'.format(albedo.tolist()))
    return albedo


def _as_finite(values, name, size=3):
    values = np.array(values, dtype=np.float64).reshape(-1)
    if (values.shape != (size,)) or not np.all(np.isfinite(values)):
        raise ValueError('`{0}` must be {1} finite values, got '
                         '{2}.'.format(name, size, values.tolist()))
    return values


class Primitive(object):
    shape = None

    def __init__(self, albedo):
        self.albedo = _as_albedo(albedo)

    def intersect(self, origins, directions):
        """Ray parameter of the first hit in front of the origin of every ray
        (`+inf` on a miss)."""
        raise NotImplementedError()

    def to_dict(self):
        raise NotImplementedError()


class GroundPlane(Primitive):
    """Horizontal plane `y = height` (the world `y` axis points down)."""
    shape = 'ground-plane'

    def __init__(self, height, albedo):
        super(GroundPlane, self).__init__(albedo)
        self.height = float(_as_finite([height], 'height', size=1)[0])

    def intersect(self, origins, directions):
        with np.errstate(divide='ignore', invalid='ignore'):
            t = (self.height - origins[:, 1]) / directions[:, 1]
        return np.where(np.isfinite(t) & (t > 0), t, np.inf)

    def to_dict(self):
        return {'shape': self.shape, 'height': self.height,
                'albedo': self.albedo.tolist()}


class Box(Primitive):
    """Axis-aligned box given by its center and its side lengths."""
    shape = 'box'

    def __init__(self, center, size, albedo):
        super(Box, self).__init__(albedo)
        self.center = _as_finite(center, 'center')
        self.size = _as_finite(size, 'size')
        if np.any(self.size <= 0):
            raise ValueError('The box sides must be positive, got '
                             '{0}.'.format(self.size.tolist()))

    def intersect(self, origins, directions):
        low = self.center - 0.5 * self.size
        high = self.center + 0.5 * self.size
        t_near = np.full(origins.shape[0], -np.inf)
        t_far = np.full(origins.shape[0], np.inf)
        for axis in range(3):
            origin, direction = origins[:, axis], directions[:, axis]
            parallel = (direction == 0)
            with np.errstate(divide='ignore', invalid='ignore'):
                t1 = (low[axis] - origin) / direction
                t2 = (high[axis] - origin) / direction
            inside = (origin >= low[axis]) & (origin <= high[axis])
            t_min = np.where(parallel, np.where(inside, -np.inf, np.inf),
                             np.minimum(t1, t2))
            t_max = np.where(parallel, np.where(inside, np.inf, -np.inf),
                             np.maximum(t1, t2))
            t_near = np.maximum(t_near, t_min)
            t_far = np.minimum(t_far, t_max)
        hit = (t_near <= t_far) & (t_far > 0)
        t = np.where(t_near > 0, t_near, t_far)
        return np.where(hit, t, np.inf)

    def to_dict(self):
        return {'shape': self.shape, 'center': self.center.tolist(),
                'size': self.size.tolist(), 'albedo': self.albedo.tolist()}


class Sphere(Primitive):
    shape = 'sphere'

    def __init__(self, center, radius, albedo):
        super(Sphere, self).__init__(albedo)
        self.center = _as_finite(center, 'center')
        self.radius = float(_as_finite([radius], 'radius', size=1)[0])
        if self.radius <= 0:
            raise ValueError('The sphere radius must be positive, got '
                             '{0}.'.format(self.radius))

    def intersect(self, origins, directions):
        offsets = origins - self.center
        a = np.sum(directions ** 2, axis=1)
        b = 2. * np.sum(directions * offsets, axis=1)
        c = np.sum(offsets ** 2, axis=1) - self.radius ** 2
        discriminant = b ** 2 - 4. * a * c
        root = np.sqrt(np.maximum(discriminant, 0.))
        t_near = (-b - root) / (2. * a)
        t_far = (-b + root) / (2. * a)
        t = np.where(t_near > 0, t_near, t_far)
        return np.where((discriminant >= 0) & (t > 0), t, np.inf)

    def to_dict(self):
        return {'shape': self.shape, 'center': self.center.tolist(),
                'radius': self.radius, 'albedo': self.albedo.tolist()}


PRIMITIVES = {cls.shape: cls for cls in (GroundPlane, Box, Sphere)}


class Scene(object):
    """Procedural scene: a list of flat-shaded primitives in front of a
    constant background."""
    def __init__(self, primitives, background_color=BACKGROUND_COLOR):
        primitives = list(primitives)
        if not primitives:
            raise ValueError('A scene needs at least one primitive.')
        for primitive in primitives:
            if not isinstance(primitive, Primitive):
                raise ValueError('Unknown primitive `{0}`.'.format(primitive))
        self.primitives = primitives
        self.background_color = _as_albedo(background_color)

    def to_dict(self):
        return {'primitives': [primitive.to_dict() for primitive in self.primitives],
                'background_color': self.background_color.tolist()}

    @classmethod
    def from_dict(cls, data):
        primitives = []
        for item in data['primitives']:
            item = dict(item)
            shape = item.pop('shape')
            if shape not in PRIMITIVES:
                raise ValueError('Unknown primitive shape `{0}`.'.format(shape))
            primitives.append(PRIMITIVES[shape](**item))
        return cls(primitives, background_color=data['background_color'])

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return self.to_dict() == other.to_dict()


class RenderedView(object):
    def __init__(self, rgb, depth, intrinsics, pose):
        rgb = np.asarray(rgb, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        if rgb.shape != (intrinsics.height, intrinsics.width, 3):
            raise ValueError('Expected an RGB image of shape {0}, got '
                             '{1}.'.format((intrinsics.height, intrinsics.width, 3),
                                           rgb.shape))
        if depth.shape != rgb.shape[:2]:
            raise ValueError('The depth map of shape {0} does not match the '
                             'image of shape {1}.'.format(depth.shape, rgb.shape))
        if not np.all(np.isfinite(rgb)):
            raise ValueError('The image must be finite.')
        if not np.all((depth > 0) | np.isposinf(depth)):
            raise ValueError('The depth must be positive or +inf everywhere.')
        self.rgb = rgb
        self.depth = depth
        self.intrinsics = intrinsics
        self.pose = pose

    @property
    def camera(self):
        return (self.intrinsics, self.pose)

    @property
    def finite_mask(self):
        return np.isfinite(self.depth)


class PointMap(object):
    """Per-pixel world coordinates, with an explicit validity channel. Invalid
    entries are stored as zeros."""
    def __init__(self, points, validity):
        points = np.array(points, dtype=np.float64)
        validity = np.asarray(validity).astype(bool)
        if (points.ndim != 3) or (points.shape[2] != 3):
            raise ValueError('Expected a HxWx3 point map, got shape '
                             '{0}.'.format(points.shape))
        if validity.shape != points.shape[:2]:
            raise ValueError('The validity of shape {0} does not match the '
                             'point map of shape {1}.'.format(validity.shape,
                                                              points.shape))
        points[~validity] = 0.
        if not np.all(np.isfinite(points)):
            raise ValueError('The valid points must be finite.')
        self.points = points
        self.validity = validity

    @property
    def resolution(self):
        return self.validity.shape


def generate_scene(seed, complexity):
    """Seeded scene: a ground plane plus `complexity` boxes and spheres
    standing on it, in front of cameras placed around the origin. Albedos are
    multiples of 1/255 so that 8-bit images store them exactly."""
    if int(complexity) < 1:
        raise ValueError('The scene complexity must be at least 1, got '
                         '{0}.'.format(complexity))
    rng = np.random.default_rng(seed)
    ground = GroundPlane(GROUND_HEIGHT, rng.integers(60, 140, size=3) / 255.)
    albedos = {tuple(ground.albedo)}
    primitives = [ground]

    for _ in range(int(complexity)):
        is_box = bool(rng.integers(2))
        x, z = rng.uniform(-6., 6.), rng.uniform(3., 12.)
        if is_box:
            size = rng.uniform(0.6, 2.4, size=3)
            center = (x, GROUND_HEIGHT - 0.5 * size[1], z)
        else:
            radius = rng.uniform(0.4, 1.2)
            center = (x, GROUND_HEIGHT - radius, z)

        albedo = rng.integers(0, 256, size=3) / 255.
        while tuple(albedo) in albedos:
            albedo = rng.integers(0, 256, size=3) / 255.
        albedos.add(tuple(albedo))

        if is_box:
            primitives.append(Box(center, size, albedo))
        else:
            primitives.append(Sphere(center, radius, albedo))

    return Scene(primitives)


def pixel_grid(K):
    pixel_y, pixel_x = np.meshgrid(np.arange(K.height, dtype=np.float64),
                                   np.arange(K.width, dtype=np.float64),
                                   indexing='ij')
    return pixel_x, pixel_y


def render_scene(scene, K, T):
    """Ray-cast `scene` through the pixel centers of the camera `(K, T)`.

    Rays are parametrized so that the ray parameter of a hit is its
    camera-frame depth. The nearest hit over all the primitives is kept (the
    first primitive in scene order on exact ties)."""
    pixel_x, pixel_y = pixel_grid(K)
    directions = np.stack([(pixel_x - K.cx) / K.fx,
                           (pixel_y - K.cy) / K.fy,
                           np.ones_like(pixel_x)], axis=-1).reshape(-1, 3)
    directions = directions @ T.rotation
    origins = np.broadcast_to(T.center, directions.shape)

    hits = np.stack([primitive.intersect(origins, directions)
                     for primitive in scene.primitives], axis=0)
    nearest = np.argmin(hits, axis=0)
    depth = hits[nearest, np.arange(hits.shape[1])]

    albedos = np.stack([primitive.albedo for primitive in scene.primitives], axis=0)
    rgb = np.where(np.isfinite(depth)[:, None], albedos[nearest],
                   scene.background_color)

    return RenderedView(rgb.reshape(K.height, K.width, 3),
                        depth.reshape(K.height, K.width), K, T)


def view_to_point_map(view):
    """Back-project the pixel centers of `view` with its depth. Pixels that
    see the background are invalid."""
    validity = view.finite_mask
    if not np.any(validity):
        raise ValueError('The view has no pixel with finite depth.')
    pixel_x, pixel_y = pixel_grid(view.intrinsics)
    depth = np.where(validity, view.depth, 0.)
    points = back_project(pixel_x, pixel_y, depth, view.intrinsics, view.pose)
    return PointMap(points, validity)
