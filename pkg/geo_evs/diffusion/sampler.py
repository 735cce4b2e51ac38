import numpy as np
import torch

from geo_evs.diffusion.denoiser import denoise_predict
from geo_evs.diffusion.latent import (LATENT_CHANNELS, latent_resolution,
                                      encode_condition, null_condition,
                                      decode_latent)
from geo_evs.utils.torch_utils import make_generator

DEFAULT_NUM_STEPS = 30
DEFAULT_S_CFG = 1.5


def cfg_combine(eps_cond, eps_uncond, s_cfg):
    """Classifier-free guidance: `eps_uncond + s_cfg (eps_cond - eps_uncond)`.
    A scale of 1 returns the conditional prediction unchanged."""
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError('The conditional prediction of shape {0} does not match '
                         'the unconditional prediction of shape {1}.'.format(
                         tuple(eps_cond.shape), tuple(eps_uncond.shape)))
    if s_cfg == 1:
        return eps_cond.clone()
    return eps_uncond + s_cfg * (eps_cond - eps_uncond)


def sampling_timesteps(num_train_steps, num_steps):
    """`num_steps` evenly spaced training timesteps, descending from
    `num_train_steps` to 1."""
    if not (1 <= num_steps <= num_train_steps):
        raise ValueError('The number of sampling steps must be in [1, {0}], '
                         'got {1}.'.format(num_train_steps, num_steps))
    timesteps = np.floor(np.linspace(num_train_steps, 1, num_steps) + 0.5)
    return [int(t) for t in timesteps]


def ddim_step(z, eps, t, t_prev, schedule, eta=0., noise=None):
    """Update of the latent from timestep `t` to `t_prev` (0 for the final
    step). `eta = 0` is the deterministic update, `eta = 1` the ancestral
    one, which needs standard normal `noise`."""
    alpha_bar = schedule.alpha_bar(t)
    alpha_bar_prev = schedule.alpha_bar(t_prev)
    z0 = (z - torch.sqrt(1. - alpha_bar) * eps) / torch.sqrt(alpha_bar)

    sigma = eta * torch.sqrt((1. - alpha_bar_prev) / (1. - alpha_bar)
                             * (1. - alpha_bar / alpha_bar_prev))
    z_prev = (torch.sqrt(alpha_bar_prev) * z0
              + torch.sqrt(torch.clamp(1. - alpha_bar_prev - sigma ** 2, min=0.)) * eps)
    if (eta > 0) and (t_prev > 0):
        if noise is None:
            raise ValueError('The stochastic update needs a noise sample.')
        z_prev = z_prev + sigma * noise
    return z_prev


def sample(model, condition, schedule, num_steps=DEFAULT_NUM_STEPS,
           s_cfg=DEFAULT_S_CFG, seed=0, stochastic=False, resolution=None,
           logs=None):
    """Generate an image from Gaussian noise in `num_steps` denoising steps.

    With `condition=None` only the null-token branch is evaluated (an
    unconditional sample at `resolution`). With `s_cfg == 1` only the
    conditional branch is evaluated. Otherwise both branches are combined by
    classifier-free guidance.
    """
    timesteps = sampling_timesteps(schedule.num_train_steps, num_steps)
    if condition is not None:
        resolution = condition.resolution
    elif resolution is None:
        raise ValueError('An unconditional sample needs a resolution.')
    height, width = latent_resolution(resolution)

    generator = make_generator(seed)
    z = torch.randn((LATENT_CHANNELS, height, width), generator=generator,
                    dtype=torch.float64)
    null = null_condition(resolution)
    encoding = None if (condition is None) else encode_condition(condition)

    with torch.no_grad():
        for t, t_prev in zip(timesteps, timesteps[1:] + [0]):
            if encoding is None:
                eps = denoise_predict(model, z, t, null)
            elif s_cfg == 1:
                eps = denoise_predict(model, z, t, encoding)
            else:
                eps = cfg_combine(denoise_predict(model, z, t, encoding),
                                  denoise_predict(model, z, t, null), s_cfg)
            noise = None
            if stochastic and (t_prev > 0):
                noise = torch.randn(z.shape, generator=generator,
                                    dtype=torch.float64)
            z = ddim_step(z, eps, t, t_prev, schedule,
                          eta=1. if stochastic else 0., noise=noise)

    if logs is not None:
        logs.update(num_steps=num_steps, s_cfg=s_cfg, seed=seed,
                    stochastic=bool(stochastic), timesteps=timesteps,
                    conditional=encoding is not None)

    return decode_latent(z)
