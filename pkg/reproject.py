import logging

from geo_evs import gar, io

logger = logging.getLogger(__name__)


def main(args):
    K, T = io.read_camera(args.camera)
    target_K, target_T = io.read_camera(args.target_camera)
    point_map = io.read_point_map(args.pointmap)
    image = io.read_image(args.image)
    if point_map.resolution != K.resolution:
        raise ValueError('The point map `{0}` has resolution {1}, but the camera '
                         '`{2}` has resolution {3}.'.format(args.pointmap,
                         point_map.resolution, args.camera, K.resolution))

    condition = gar.build_condition(point_map, target_K, target_T, image=image,
                                    num_workers=args.num_workers)
    io.write_condition(args.out, condition)
    logger.info('Wrote the condition map `{0}` ({1:.1%} valid).'.format(
                args.out, condition.valid_fraction))


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Geometry-aware reprojection '
        '- Build a condition map at a target camera')

    inputs = parser.add_argument_group('Inputs')
    inputs.add_argument('--camera', type=str, required=True,
        help='camera JSON of the observed view')
    inputs.add_argument('--pointmap', type=str, required=True,
        help='point map (GPM1) of the observed view')
    inputs.add_argument('--image', type=str, required=True,
        help='RGB image (PNG) of the observed view')
    inputs.add_argument('--target-camera', type=str, required=True,
        help='camera JSON of the target view')

    # Miscellaneous
    misc = parser.add_argument_group('Miscellaneous')
    misc.add_argument('--out', type=str, required=True,
        help='output prefix (writes `<out>.png`, `<out>.mask.png` and '
             '`<out>.depth`)')
    misc.add_argument('--num-workers', type=int, default=1,
        help='number of chunks of the rasterization (default: 1)')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
