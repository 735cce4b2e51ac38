import os
import json
import logging

from geo_evs import io
from geo_evs.pipeline import load_training_pairs, train_denoiser
from geo_evs.utils.helpers import DEFAULT_CONFIG, load_config

logger = logging.getLogger(__name__)


def main(args):
    config = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    if args.seed is not None:
        config['seed'] = args.seed
    if args.steps is not None:
        config['steps'] = args.steps

    output_folder = os.path.dirname(os.path.abspath(args.out))
    if not os.path.exists(output_folder):
        os.makedirs(output_folder)
    config_filename = os.path.join(output_folder, 'config.json')
    with open(config_filename, 'w') as f:
        config.update(pairs=args.pairs, masks=args.masks, out=args.out)
        json.dump(config, f, indent=2)

    manifest = io.read_manifest(os.path.join(args.pairs, 'manifest.json'))
    pairs = load_training_pairs(manifest)
    library = io.read_mask_library(args.masks) if args.masks else None
    logger.info('Training on {0} pairs ({1}).'.format(len(pairs),
        'no artifact masks' if library is None
        else '{0} artifact masks'.format(len(library))))

    logs = []
    model, schedule = train_denoiser(pairs, config, library=library, logs=logs)
    io.write_checkpoint(args.out, model, schedule=schedule)
    with open(os.path.join(output_folder, 'train_logs.json'), 'w') as f:
        json.dump(logs, f)
    if logs:
        logger.info('Loss {0:.4f} -> {1:.4f}.'.format(logs[0]['loss'],
                                                     logs[-1]['loss']))


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Geometry-conditioned '
        'diffusion - Train')

    parser.add_argument('--pairs', type=str, required=True,
        help='dataset directory (containing `manifest.json`)')
    parser.add_argument('--masks', type=str, default=None,
        help='directory of the artifact-mask library (default: no injection)')
    parser.add_argument('--config', type=str, default=None,
        help='path to the configuration file')

    # Miscellaneous
    misc = parser.add_argument_group('Miscellaneous')
    misc.add_argument('--out', type=str, required=True,
        help='path of the output checkpoint')
    misc.add_argument('--seed', type=int, default=None,
        help='random seed (default: `seed` of the configuration)')
    misc.add_argument('--steps', type=int, default=None,
        help='number of optimization steps (default: `steps` of the '
             'configuration)')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
