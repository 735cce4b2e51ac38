import os
import logging

from geo_evs import io, pipeline
from geo_evs.artifact import build_mask_library
from geo_evs.utils.helpers import DEFAULT_CONFIG, load_config

logger = logging.getLogger(__name__)


def get_config(args):
    config = load_config(args.config) if args.config else dict(DEFAULT_CONFIG)
    if args.seed is not None:
        config['seed'] = args.seed
    return config


def build_dataset(args):
    config = get_config(args)
    splits = {'train': config['num_scenes'], 'test': config['num_test_scenes']}
    for split, num_scenes in splits.items():
        pipeline.build_dataset(os.path.join(args.output_folder, split),
                               num_scenes, config['cameras_per_scene'],
                               config['resolution'], config['seed'],
                               split=split,
                               scene_complexity=config['scene_complexity'],
                               focal_length=config['focal_length'],
                               num_workers=config['num_workers'])
    pipeline.write_run_metadata(args.output_folder, 'build-dataset', config,
                                seeds={'dataset': config['seed']})


def ablation(args):
    config = get_config(args)
    manifest = io.read_manifest(os.path.join(args.dataset, 'train', 'manifest.json'))
    test_manifest = io.read_manifest(os.path.join(args.dataset, 'test',
                                                  'manifest.json'))
    if args.masks is not None:
        library = io.read_mask_library(args.masks)
    else:
        scenes = [pipeline.load_scene(manifest, scene_id)
                  for scene_id in manifest.scenes]
        rig = pipeline.make_rig(config['resolution'], config['cameras_per_scene'],
                                focal_length=config['focal_length'])
        library = build_mask_library(scenes, rig,
            [tuple(offset) for offset in config['mask_offsets']],
            config['resolution'], config['seed'], max_yaw=config['max_yaw'])
        io.write_mask_library(os.path.join(args.output_folder, 'masks'), library)

    report, _ = pipeline.run_ablation(manifest, library, config, test_manifest,
                                      output_folder=args.output_folder)
    pipeline.write_run_metadata(args.output_folder, 'ablation', config,
                                seeds={'training': config['seed']})
    for name, row in sorted(report['variants'].items()):
        logger.info('{0} ({1}): S-PSNR {2:.3f} dB'.format(name,
                    row['mask_source'], row['s_psnr']))


def eval_extrap(args):
    config = get_config(args)
    manifest = io.read_manifest(os.path.join(args.dataset, 'test', 'manifest.json'))
    report = pipeline.run_extrapolation_eval(manifest, args.ckpt, config=config)
    if not os.path.exists(args.output_folder):
        os.makedirs(args.output_folder)
    io.write_report(os.path.join(args.output_folder, 'report.json'), report)
    pipeline.write_run_metadata(args.output_folder, 'eval-extrap', config,
                                seeds={'evaluation': config['seed']})


def eval_interp(args):
    config = get_config(args)
    manifest = io.read_manifest(os.path.join(args.dataset, 'test', 'manifest.json'))
    report = pipeline.run_interpolation_eval(manifest, args.ckpt, config=config)
    if not os.path.exists(args.output_folder):
        os.makedirs(args.output_folder)
    io.write_report(os.path.join(args.output_folder, 'report.json'), report)
    pipeline.write_run_metadata(args.output_folder, 'eval-interp', config,
                                seeds={'evaluation': config['seed']})


COMMANDS = {
    'build-dataset': build_dataset,
    'ablation': ablation,
    'eval-extrap': eval_extrap,
    'eval-interp': eval_interp,
}


def main(args):
    COMMANDS[args.command](args)


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Geometry-conditioned '
        'extrapolated view synthesis - Experiment pipeline')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    def add_common(subparser):
        subparser.add_argument('--config', type=str, default=None,
            help='path to the configuration file')
        misc = subparser.add_argument_group('Miscellaneous')
        misc.add_argument('--output-folder', type=str, required=True,
            help='name of the output folder')
        misc.add_argument('--seed', type=int, default=None,
            help='random seed (default: `seed` of the configuration)')

    add_common(subparsers.add_parser('build-dataset',
        help='render the train and test splits'))

    subparser = subparsers.add_parser('ablation',
        help='train and evaluate the V1/V2/V3 variants')
    subparser.add_argument('--dataset', type=str, required=True,
        help='dataset folder (with `train` and `test` splits)')
    subparser.add_argument('--masks', type=str, default=None,
        help='mask library (default: harvested from the training scenes)')
    add_common(subparser)

    for command in ('eval-extrap', 'eval-interp'):
        subparser = subparsers.add_parser(command,
            help='evaluate a checkpoint on the test split')
        subparser.add_argument('--dataset', type=str, required=True,
            help='dataset folder (with a `test` split)')
        subparser.add_argument('--ckpt', type=str, required=True,
            help='path to the checkpoint')
        add_common(subparser)

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
