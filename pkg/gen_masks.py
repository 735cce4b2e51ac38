import logging

from geo_evs import io
from geo_evs.artifact import build_mask_library
from geo_evs.pipeline import make_rig, scene_seeds
from geo_evs.scene import generate_scene
from geo_evs.utils.helpers import DEFAULT_CONFIG, load_config

logger = logging.getLogger(__name__)


def parse_offsets(text):
    """`"0.5:0,1:1"` -> `[(0.5, 0.), (1., 1.)]`."""
    offsets = []
    for item in text.split(','):
        angle_fraction, _, lateral_offset = item.partition(':')
        offsets.append((float(angle_fraction), float(lateral_offset or 0.)))
    return offsets


def main(args):
    config = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    offsets = (parse_offsets(args.offsets) if args.offsets
               else [tuple(offset) for offset in config['mask_offsets']])
    resolution = tuple(config['resolution'])

    scenes = [generate_scene(seed, config['scene_complexity'])
              for seed in scene_seeds(args.seed, args.scenes, split='train')]
    rig = make_rig(resolution, config['cameras_per_scene'],
                   focal_length=config['focal_length'])
    library = build_mask_library(scenes, rig, offsets, resolution, args.seed,
                                 max_yaw=config['max_yaw'])
    io.write_mask_library(args.out, library)
    logger.info('Wrote {0} masks to `{1}` (mean drop fraction {2:.3f}).'.format(
                len(library), args.out, 1. - library.coverage.mean()))


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Artifact masks - Harvest '
        'a mask library from virtual-pose reprojections')

    parser.add_argument('--scenes', type=int, required=True,
        help='number of seeded scenes')
    parser.add_argument('--offsets', type=str, default=None,
        help='virtual offsets as `fraction:lateral` pairs separated by commas '
             '(default: `mask_offsets` of the configuration)')
    parser.add_argument('--config', type=str, default=None,
        help='path to the configuration file')

    # Miscellaneous
    misc = parser.add_argument_group('Miscellaneous')
    misc.add_argument('--out', type=str, required=True,
        help='output directory of the library')
    misc.add_argument('--seed', type=int, default=1,
        help='random seed (default: 1)')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
