import copy
import yaml

from geo_evs.diffusion.denoiser import DenoiserModel
from geo_evs.diffusion.schedule import NoiseSchedule

DEFAULT_CONFIG = {
    # Data
    'resolution': [64, 64],
    'focal_length': None,
    'num_scenes': 40,
    'num_test_scenes': 8,
    'cameras_per_scene': 3,
    'scene_complexity': 6,
    # Diffusion
    't_train': 1000,
    'beta_start': 1e-4,
    'beta_end': 0.02,
    'architecture': {
        'hidden_channels': 32,
        'num_stages': 2,
        'time_embedding_size': 32,
        'kernel_size': 3,
        'nonlinearity': 'silu',
    },
    # Training
    'p_drop': 0.1,
    'p_inject': 0.4,
    'lr': 1e-3,
    'weight_decay': 0.,
    'steps': 2000,
    'batch_size': 8,
    'seed': 1,
    # Sampling
    'num_sample_steps': 30,
    's_cfg': 1.5,
    'stochastic_sampler': False,
    # Artifact masks
    'mask_offsets': [[0.5, 0.], [1., 0.], [0.5, 1.], [1., 1.]],
    'max_yaw': 45.,
    # Evaluation
    'reference_fraction': 0.05,
    'eval_offsets': [[0., 0.], [0.15, 1.], [0.15, -1.], [0.25, 1.], [0.25, -1.],
                     [0.4, 1.], [0.4, -1.], [0.5, 1.], [0.5, -1.]],
    'offset_bins': [0., 5., 10., 15., 20., 30.],
    'sparsity_bins': [0., 0.02, 0.05, 0.1],
    'num_workers': 1,
}


def merge_config(config, defaults=DEFAULT_CONFIG, prefix=''):
    """Recursively merge `config` over `defaults`. Unknown keys are errors."""
    merged = copy.deepcopy(defaults)
    for key, value in (config or {}).items():
        if key not in defaults:
            raise ValueError('Unknown configuration key `{0}{1}`.'.format(prefix, key))
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ValueError('The configuration key `{0}{1}` expects a '
                                 'mapping, got `{2}`.'.format(prefix, key, value))
            value = merge_config(value, defaults=defaults[key],
                                 prefix='{0}{1}.'.format(prefix, key))
        merged[key] = value
    return merged


def load_config(path):
    """Experiment configuration from a YAML (or JSON) file."""
    with open(path, 'r') as f:
        config = yaml.load(f, Loader=yaml.FullLoader)
    if (config is not None) and not isinstance(config, dict):
        raise ValueError('The configuration file `{0}` does not contain a '
                         'mapping.'.format(path))
    return merge_config(config)


def get_denoiser_for_config(config):
    architecture = config['architecture']
    return DenoiserModel(hidden_channels=architecture['hidden_channels'],
                         num_stages=architecture['num_stages'],
                         time_embedding_size=architecture['time_embedding_size'],
                         kernel_size=architecture['kernel_size'],
                         nonlinearity=architecture['nonlinearity'])


def get_schedule_for_config(config):
    return NoiseSchedule(num_train_steps=config['t_train'],
                         beta_start=config['beta_start'],
                         beta_end=config['beta_end'])
