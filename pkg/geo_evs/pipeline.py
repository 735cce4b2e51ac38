import os
import json
import logging
import subprocess
import numpy as np
import torch

from tqdm import tqdm, trange

from geo_evs import gar, io, lpsr
from geo_evs.artifact import make_random_box_library
from geo_evs.diffusion.sampler import sample
from geo_evs.diffusion.trainer import DiffusionTrainer, TrainingPair
from geo_evs.geometry import (CameraIntrinsics, CameraPose,
                              make_extrapolated_pose, pose_offset_degrees)
from geo_evs.scene import generate_scene, render_scene, view_to_point_map
from geo_evs.utils.helpers import (DEFAULT_CONFIG, get_denoiser_for_config,
                                   get_schedule_for_config)

logger = logging.getLogger(__name__)

SPLITS = {'train': 0, 'test': 1}
VARIANTS = (('V1', 'none'), ('V2', 'random-box'), ('V3', 'reprojection'))


def rig_yaws(cameras_per_scene, yaw_step=45.):
    """Yaws of the rig cameras: front, then alternating right and left
    cameras spaced by `yaw_step` degrees."""
    yaws, k = [0.], 1
    while len(yaws) < cameras_per_scene:
        yaws.append(k * yaw_step)
        if len(yaws) < cameras_per_scene:
            yaws.append(-k * yaw_step)
        k += 1
    return yaws


def make_rig(resolution, cameras_per_scene, focal_length=None, yaw_step=45.):
    K = CameraIntrinsics.from_resolution(resolution, focal_length=focal_length)
    return [(K, CameraPose.from_yaw(yaw))
            for yaw in rig_yaws(cameras_per_scene, yaw_step=yaw_step)]


def scene_seeds(seed, num_scenes, split='train'):
    """Seeds of the scenes of a split. The splits draw from disjoint child
    streams of `seed`."""
    sequence = np.random.SeedSequence(seed, spawn_key=(SPLITS[split],))
    return [int(s) for s in sequence.generate_state(num_scenes)]


def task_seed(seed, *task_id):
    return int(np.random.SeedSequence(seed, spawn_key=task_id).generate_state(1)[0])


def git_describe():
    try:
        output = subprocess.check_output(['git', 'describe', '--always',
            '--dirty', '--tags'], stderr=subprocess.DEVNULL,
            cwd=os.path.dirname(os.path.abspath(__file__)))
        return output.decode('utf-8').strip()
    except (OSError, subprocess.CalledProcessError):
        return 'unknown'


def write_run_metadata(folder, command, config, seeds=None):
    if not os.path.exists(folder):
        os.makedirs(folder)
    with open(os.path.join(folder, 'run.json'), 'w') as f:
        json.dump({'command': command,
                   'config': config,
                   'seeds': seeds or {},
                   'git': git_describe(),
                   'format_versions': io.FORMAT_VERSIONS}, f, indent=2,
                  sort_keys=True)


def build_dataset(root, num_scenes, cameras_per_scene, resolution, seed,
                  split='train', scene_complexity=6, focal_length=None,
                  num_workers=1):
    """Render seeded scenes and write the observed views with their `u = v`
    condition/supervision pairs under `root`."""
    if (int(num_scenes) < 1) or (int(cameras_per_scene) < 1):
        raise ValueError('The numbers of scenes and cameras must be positive, '
                         'got {0} and {1}.'.format(num_scenes, cameras_per_scene))
    resolution = tuple(int(size) for size in resolution)
    for folder in ('scenes', 'views'):
        if not os.path.exists(os.path.join(root, folder)):
            os.makedirs(os.path.join(root, folder))

    rig = make_rig(resolution, cameras_per_scene, focal_length=focal_length)
    seeds = scene_seeds(seed, num_scenes, split=split)
    entries, scenes = [], {}
    for scene_index, scene_seed in enumerate(tqdm(seeds, desc='Scenes')):
        scene_id = 'scene_{0:04d}'.format(scene_index)
        scene = generate_scene(scene_seed, scene_complexity)
        scenes[scene_id] = os.path.join('scenes', scene_id + '.json')
        io.write_scene(os.path.join(root, scenes[scene_id]), scene)

        for camera_index, (K, T) in enumerate(rig):
            view_id = 'cam{0}'.format(camera_index)
            view = render_scene(scene, K, T)
            if not np.any(view.finite_mask):
                logger.warning('Skipping {0}/{1}: no finite depth.'.format(
                               scene_id, view_id))
                continue
            condition, supervision = gar.make_training_pair(view, K, T,
                target_truth=view, num_workers=num_workers)

            prefix = os.path.join('views', '{0}_{1}'.format(scene_id, view_id))
            entry = {'scene': scene_id, 'view': view_id,
                     'camera': prefix + '.camera.json',
                     'image': prefix + '.png',
                     'pointmap': prefix + '.gpm',
                     'depth': prefix + '.depth',
                     'condition': prefix + '.cond'}
            io.write_camera(os.path.join(root, entry['camera']), K, T)
            io.write_image(os.path.join(root, entry['image']), supervision)
            io.write_point_map(os.path.join(root, entry['pointmap']),
                               view_to_point_map(view))
            io.write_depth(os.path.join(root, entry['depth']), view.depth,
                           view.finite_mask)
            io.write_condition(os.path.join(root, entry['condition']), condition)
            entries.append(entry)

    metadata = {'split': split, 'seed': seed, 'resolution': list(resolution),
                'cameras_per_scene': cameras_per_scene,
                'scene_complexity': scene_complexity,
                'scene_seeds': dict(zip(sorted(scenes), seeds)),
                'scenes': scenes}
    manifest = io.DatasetManifest(os.path.abspath(root), entries, metadata=metadata)
    io.write_manifest(os.path.join(root, 'manifest.json'), manifest)
    logger.info('Wrote {0} views of {1} scenes to `{2}`.'.format(len(entries),
                len(seeds), root))
    return manifest


def load_training_pairs(manifest):
    pairs = []
    for entry in manifest:
        image = io.read_image(manifest.path(entry['image']))
        if entry.get('condition') is not None:
            condition = io.read_condition(manifest.path(entry['condition']))
        else:
            K, T = io.read_camera(manifest.path(entry['camera']))
            point_map = io.read_point_map(manifest.path(entry['pointmap']))
            condition = gar.build_condition(point_map, K, T, image=image)
        pairs.append(TrainingPair(condition, image))
    return pairs


def load_scene(manifest, scene_id):
    return io.read_scene(manifest.path(manifest.metadata['scenes'][scene_id]))


def train_denoiser(pairs, config, library=None, logs=None):
    """Train a fresh denoiser on `pairs`. The initialization and every random
    stream depend on `config['seed']` only, so two calls that differ by their
    `library` differ only by the injection draws."""
    torch.manual_seed(config['seed'])
    model = get_denoiser_for_config(config)
    schedule = get_schedule_for_config(config)
    trainer = DiffusionTrainer(model, schedule, pairs,
                               library=library,
                               p_drop=config['p_drop'],
                               p_inject=config['p_inject'],
                               lr=config['lr'],
                               weight_decay=config['weight_decay'],
                               batch_size=config['batch_size'],
                               seed=config['seed'])
    for _ in trange(config['steps'], desc='Training', leave=False):
        step_logs = trainer.step()
        if logs is not None:
            logs.append(step_logs)
    return model, schedule


def _load_model(checkpoint, config):
    if isinstance(checkpoint, str):
        model, schedule = io.read_checkpoint(checkpoint)
        if schedule is None:
            schedule = get_schedule_for_config(config)
        return model, schedule
    return checkpoint


def _scene_views(manifest):
    views = {}
    for entry in manifest:
        views.setdefault(entry['scene'], {})[entry['view']] = entry
    return views


def _evaluate(model, schedule, scene, source, K, target_T, scene_index, config,
              pose_offset, view_id, scene_id, reference_fraction):
    point_map, image = source
    condition = gar.build_condition(point_map, K, target_T, image=image,
                                    num_workers=config['num_workers'])
    truth = render_scene(scene, K, target_T)
    if not np.any(truth.finite_mask):
        logger.warning('Skipping {0}/{1}: the target sees no geometry.'.format(
                       scene_id, view_id))
        return None
    reference = lpsr.make_sparse_reference(truth, reference_fraction,
        task_seed(config['seed'], SPLITS['test'], scene_index, 0))
    prediction = sample(model, condition, schedule,
                        num_steps=config['num_sample_steps'],
                        s_cfg=config['s_cfg'],
                        seed=task_seed(config['seed'], SPLITS['test'], scene_index, 1),
                        stochastic=config['stochastic_sampler'])
    return lpsr.evaluate_view(prediction, reference, pose_offset=pose_offset,
                              scene=scene_id, view=view_id)


def run_extrapolation_eval(manifest, checkpoint, offsets=None, config=None):
    """Evaluate a denoiser at extrapolated poses with simulated sparse
    references.

    For every scene, the targets are built from the first two rig cameras
    with `make_extrapolated_pose(cam0, cam1, f, d)` for every offset
    `(f, d)`; the condition is reprojected from `cam0`. Returns the binned
    report of `bin_and_aggregate`."""
    config = dict(DEFAULT_CONFIG if (config is None) else config)
    offsets = config['eval_offsets'] if (offsets is None) else offsets
    model, schedule = _load_model(checkpoint, config)

    records = []
    scene_views = _scene_views(manifest)
    for scene_index, scene_id in enumerate(tqdm(manifest.scenes, desc='Evaluation')):
        views = scene_views[scene_id]
        if ('cam0' not in views) or ('cam1' not in views):
            logger.warning('Skipping {0}: extrapolation needs the cameras '
                           '`cam0` and `cam1`.'.format(scene_id))
            continue
        scene = load_scene(manifest, scene_id)
        K, source_T = io.read_camera(manifest.path(views['cam0']['camera']))
        _, other_T = io.read_camera(manifest.path(views['cam1']['camera']))
        source = (io.read_point_map(manifest.path(views['cam0']['pointmap'])),
                  io.read_image(manifest.path(views['cam0']['image'])))

        for angle_fraction, lateral_offset in offsets:
            target_T = make_extrapolated_pose(source_T, other_T, angle_fraction,
                                              lateral_offset)
            view_id = 'cam0+f{0:g}d{1:+g}'.format(angle_fraction, lateral_offset)
            record = _evaluate(model, schedule, scene, source, K, target_T,
                               scene_index, config,
                               pose_offset_degrees(source_T, target_T),
                               view_id, scene_id, config['reference_fraction'])
            if record is not None:
                records.append(record)

    return lpsr.bin_and_aggregate(records, offset_bins=config['offset_bins'],
                                  sparsity_bins=config['sparsity_bins'])


def run_interpolation_eval(manifest, checkpoint, config=None,
                           reference_fraction=1., views=None):
    """In-manifold evaluation: every observed view is reprojected onto itself
    and evaluated against its own render, with all of its finite-depth
    pixels as reference by default."""
    config = dict(DEFAULT_CONFIG if (config is None) else config)
    model, schedule = _load_model(checkpoint, config)

    records = []
    scene_views = _scene_views(manifest)
    for scene_index, scene_id in enumerate(manifest.scenes):
        scene = load_scene(manifest, scene_id)
        for view_id, entry in sorted(scene_views[scene_id].items()):
            if (views is not None) and (view_id not in views):
                continue
            K, T = io.read_camera(manifest.path(entry['camera']))
            source = (io.read_point_map(manifest.path(entry['pointmap'])),
                      io.read_image(manifest.path(entry['image'])))
            record = _evaluate(model, schedule, scene, source, K, T,
                               scene_index, config, 0., view_id, scene_id,
                               reference_fraction)
            if record is not None:
                records.append(record)

    return lpsr.bin_and_aggregate(records, offset_bins=config['offset_bins'],
                                  sparsity_bins=config['sparsity_bins'])


def run_ablation(manifest, mask_library, config, test_manifest,
                 output_folder=None):
    """Train the three ablation variants, identical except for the source of
    their artifact masks (none, random boxes, reprojection library), and
    evaluate each on the held-out extrapolated split."""
    pairs = load_training_pairs(manifest)
    drop_fractions = [1. - coverage for coverage in mask_library.coverage]
    libraries = {
        'none': None,
        'random-box': make_random_box_library(mask_library.resolution,
            drop_fractions, seed=task_seed(config['seed'], 2)),
        'reprojection': mask_library,
    }

    report = {'schema_version': lpsr.REPORT_SCHEMA_VERSION, 'variants': {}}
    train_logs = {}
    for name, mask_source in VARIANTS:
        logger.info('Training {0} (masks: {1}).'.format(name, mask_source))
        logs = []
        model, schedule = train_denoiser(pairs, config,
                                         library=libraries[mask_source],
                                         logs=logs)
        evaluation = run_extrapolation_eval(test_manifest, (model, schedule),
                                            config=config)
        overall = evaluation['overall']
        logger.info('{0}: S-PSNR {1:.3f} dB, S-SSIM {2}.'.format(name,
                    overall['s_psnr'], overall['s_ssim']))

        report['variants'][name] = {'mask_source': mask_source,
                                    'p_inject': config['p_inject'],
                                    'initial_loss': logs[0]['loss'] if logs else None,
                                    'final_loss': logs[-1]['loss'] if logs else None,
                                    'evaluation': evaluation}
        report['variants'][name].update((metric, overall[metric])
                                        for metric in lpsr.METRICS)
        train_logs[name] = logs

        if output_folder is not None:
            if not os.path.exists(output_folder):
                os.makedirs(output_folder)
            io.write_checkpoint(os.path.join(output_folder, name + '.gevs'),
                                model, schedule=schedule)

    if output_folder is not None:
        io.write_report(os.path.join(output_folder, 'ablation.json'), report)
        with open(os.path.join(output_folder, 'train_logs.json'), 'w') as f:
            json.dump(train_logs, f, sort_keys=True)

    return report, train_logs
