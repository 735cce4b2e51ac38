from geo_evs.diffusion.schedule import NoiseSchedule, add_noise
from geo_evs.diffusion.latent import (ConditionEncoding, encode_image,
                                      decode_latent, encode_condition,
                                      null_condition)
from geo_evs.diffusion.denoiser import DenoiserModel, denoise_predict
from geo_evs.diffusion.trainer import TrainingPair, training_loss, DiffusionTrainer
from geo_evs.diffusion.sampler import cfg_combine, sample

__all__ = ['NoiseSchedule', 'add_noise', 'ConditionEncoding', 'encode_image',
           'decode_latent', 'encode_condition', 'null_condition',
           'DenoiserModel', 'denoise_predict', 'TrainingPair', 'training_loss',
           'DiffusionTrainer', 'cfg_combine', 'sample']
