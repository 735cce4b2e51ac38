import pytest

import numpy as np
import torch

from geo_evs.diffusion.denoiser import DenoiserModel, denoise_predict
from geo_evs.diffusion.latent import encode_condition, decode_latent
from geo_evs.diffusion.sampler import (cfg_combine, sampling_timesteps, ddim_step,
                                       sample)
from geo_evs.diffusion.schedule import NoiseSchedule, add_noise
from geo_evs.gar import build_condition
from geo_evs.utils.torch_utils import make_generator

from geo_evs.tests.utils import make_unittest_view, HEIGHT, WIDTH


def make_model(seed=0):
    torch.manual_seed(seed)
    return DenoiserModel(hidden_channels=4, num_stages=1, time_embedding_size=4)


def make_schedule():
    return NoiseSchedule(num_train_steps=100, beta_start=1e-3, beta_end=0.1)


def make_condition(seed=0):
    view = make_unittest_view(seed=seed)
    return build_condition(view, view.intrinsics, view.pose)


def test_cfg_combine():
    rng = np.random.default_rng(0)
    eps_cond = torch.as_tensor(rng.normal(size=(3, 4, 4)))
    eps_uncond = torch.as_tensor(rng.normal(size=(3, 4, 4)))

    assert torch.equal(cfg_combine(eps_cond, eps_uncond, 1.), eps_cond)
    assert torch.equal(cfg_combine(eps_cond, eps_uncond, 0.), eps_uncond)
    torch.testing.assert_close(cfg_combine(eps_cond, eps_uncond, 2.),
                               2. * eps_cond - eps_uncond)

    # Affine in the guidance scale
    combined = [cfg_combine(eps_cond, eps_uncond, s) for s in (1.5, 2.5, 3.5)]
    torch.testing.assert_close(combined[2] - combined[1], combined[1] - combined[0])


def test_cfg_combine_shape_mismatch():
    with pytest.raises(ValueError):
        cfg_combine(torch.zeros(3, 4, 4), torch.zeros(3, 4, 2), 1.5)


@pytest.mark.parametrize('num_train_steps,num_steps', [(1000, 30), (100, 100),
                                                       (100, 1), (50, 7)])
def test_sampling_timesteps(num_train_steps, num_steps):
    timesteps = sampling_timesteps(num_train_steps, num_steps)
    assert len(timesteps) == num_steps
    assert timesteps[0] == num_train_steps
    if num_steps > 1:
        assert timesteps[-1] == 1
    assert all(a > b for a, b in zip(timesteps, timesteps[1:]))


@pytest.mark.parametrize('num_steps', [0, 101])
def test_sampling_timesteps_out_of_range(num_steps):
    with pytest.raises(ValueError):
        sampling_timesteps(100, num_steps)
    with pytest.raises(ValueError):
        sample(make_model(), make_condition(), make_schedule(), num_steps=num_steps)


def test_ddim_step_recovers_clean_latent():
    schedule = make_schedule()
    generator = make_generator(0)
    z0 = torch.rand((3, 4, 4), generator=generator, dtype=torch.float64) * 2. - 1.
    eps = torch.randn((3, 4, 4), generator=generator, dtype=torch.float64)
    for t in (1, 50, 100):
        z_t = add_noise(z0, t, eps, schedule)
        torch.testing.assert_close(ddim_step(z_t, eps, t, 0, schedule), z0)


def test_ddim_step_stochastic_needs_noise():
    schedule = make_schedule()
    z, eps = torch.zeros(3, 4, 4, dtype=torch.float64), torch.ones(3, 4, 4, dtype=torch.float64)
    with pytest.raises(ValueError):
        ddim_step(z, eps, 50, 40, schedule, eta=1.)
    # No noise is added on the final step
    final = ddim_step(z, eps, 50, 0, schedule, eta=1.)
    torch.testing.assert_close(final, ddim_step(z, eps, 50, 0, schedule))


def test_sample_output():
    logs = {}
    image = sample(make_model(), make_condition(), make_schedule(), num_steps=5,
                   seed=3, logs=logs)
    assert image.shape == (HEIGHT, WIDTH, 3)
    assert np.all((image >= 0) & (image <= 1))
    assert logs['num_steps'] == 5
    assert logs['s_cfg'] == 1.5
    assert logs['seed'] == 3
    assert logs['stochastic'] is False
    assert logs['conditional'] is True
    assert logs['timesteps'] == sampling_timesteps(100, 5)


@pytest.mark.parametrize('stochastic', [False, True])
def test_sample_deterministic(stochastic):
    model, schedule, condition = make_model(), make_schedule(), make_condition()
    first = sample(model, condition, schedule, num_steps=5, seed=7,
                   stochastic=stochastic)
    second = sample(model, condition, schedule, num_steps=5, seed=7,
                    stochastic=stochastic)
    other = sample(model, condition, schedule, num_steps=5, seed=8,
                   stochastic=stochastic)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_sample_stochastic_option():
    model, schedule, condition = make_model(), make_schedule(), make_condition()
    deterministic = sample(model, condition, schedule, num_steps=5, seed=2)
    stochastic = sample(model, condition, schedule, num_steps=5, seed=2,
                        stochastic=True)
    assert not np.array_equal(deterministic, stochastic)


def test_sample_unit_guidance_is_conditional_branch():
    model, schedule, condition = make_model(), make_schedule(), make_condition()
    image = sample(model, condition, schedule, num_steps=6, s_cfg=1., seed=4)

    timesteps = sampling_timesteps(schedule.num_train_steps, 6)
    encoding = encode_condition(condition)
    z = torch.randn((3, HEIGHT // 4, WIDTH // 4), generator=make_generator(4),
                    dtype=torch.float64)
    with torch.no_grad():
        for t, t_prev in zip(timesteps, timesteps[1:] + [0]):
            eps = denoise_predict(model, z, t, encoding)
            z = ddim_step(z, eps, t, t_prev, schedule)

    assert np.array_equal(image, decode_latent(z))


@pytest.mark.parametrize('seed', range(10))
def test_sample_zero_guidance_is_unconditional(seed):
    model, schedule = make_model(), make_schedule()
    guided = sample(model, make_condition(seed), schedule, num_steps=4, s_cfg=0.,
                    seed=seed)
    unconditional = sample(model, None, schedule, num_steps=4, seed=seed,
                           resolution=(HEIGHT, WIDTH))
    assert np.array_equal(guided, unconditional)


def test_sample_guidance_uses_condition():
    model, schedule = make_model(), make_schedule()
    first = sample(model, make_condition(0), schedule, num_steps=4, seed=0)
    second = sample(model, make_condition(1), schedule, num_steps=4, seed=0)
    assert not np.array_equal(first, second)


def test_unconditional_sample_needs_resolution():
    with pytest.raises(ValueError):
        sample(make_model(), None, make_schedule(), num_steps=4)
