import numpy as np
import torch

from collections import OrderedDict
from torch.nn.utils.convert_parameters import parameters_to_vector

from geo_evs.artifact import inject_artifact
from geo_evs.diffusion.latent import encode_image, encode_condition, null_condition
from geo_evs.diffusion.schedule import add_noise
from geo_evs.utils.torch_utils import (weighted_mean, vector_to_gradients,
                                       make_generator)


class TrainingPair(object):
    """Condition map (clean or injected) with its supervision image and a
    positive per-sample weight."""
    def __init__(self, condition, target, weight=1.):
        target = np.asarray(target, dtype=np.float64)
        if target.shape != condition.rgb.shape:
            raise ValueError('The target of shape {0} does not match the '
                             'condition of shape {1}.'.format(target.shape,
                                                              condition.rgb.shape))
        if not (weight > 0):
            raise ValueError('The sample weight must be positive, got '
                             '{0}.'.format(weight))
        self.condition = condition
        self.target = target
        self.weight = float(weight)

    @property
    def resolution(self):
        return self.target.shape[:2]


def training_loss(model, batch, schedule, p_drop, generator, params=None,
                  logs=None):
    """Weighted noise-prediction loss over `batch` and its exact gradient.

    For every sample, in order: a timestep `t_i` uniform in `[1, T_train]`,
    standard normal noise `eps_i` and the conditional-dropout draw are taken
    from `generator`. Dropped samples are conditioned on the null token.

    Returns `(loss, gradient)`, the gradient being flattened in the order of
    `model.parameters()`.
    """
    batch = list(batch)
    if not batch:
        raise ValueError('`training_loss` needs a nonempty batch.')
    if not (0. <= p_drop <= 1.):
        raise ValueError('The dropout probability must be in [0, 1], got '
                         '{0}.'.format(p_drop))
    if params is None:
        params = OrderedDict(model.named_parameters())

    latents, noises, conditions, timesteps, dropped = [], [], [], [], []
    for pair in batch:
        z0 = encode_image(pair.target)
        t = int(torch.randint(1, schedule.num_train_steps + 1, (1,),
                              generator=generator).item())
        eps = torch.randn(z0.shape, generator=generator, dtype=torch.float64)
        drop = bool(torch.rand(1, generator=generator, dtype=torch.float64).item() < p_drop)
        if drop:
            condition = null_condition(pair.resolution)
        else:
            condition = encode_condition(pair.condition)

        latents.append(add_noise(z0, t, eps, schedule))
        noises.append(eps)
        conditions.append(condition.tensor)
        timesteps.append(t)
        dropped.append(drop)

    z_t = torch.stack(latents, dim=0)
    eps = torch.stack(noises, dim=0)
    c = torch.stack(conditions, dim=0)
    t = torch.tensor(timesteps, dtype=torch.float64)

    prediction = model(z_t, t, c, params=params)
    errors = torch.mean((eps - prediction) ** 2, dim=(1, 2, 3))
    loss = weighted_mean(errors, [pair.weight for pair in batch])

    grads = torch.autograd.grad(loss, list(params.values()))
    gradient = parameters_to_vector(grads)

    if logs is not None:
        logs['timesteps'] = timesteps
        logs['dropped'] = dropped
        logs['sample_losses'] = errors.detach().tolist()

    return loss.item(), gradient


class DiffusionTrainer(object):
    """Optimization loop of the conditional denoiser, with optional
    two-stage artifact injection on the training conditions.

    The seed is split into independent streams: one for batch selection, one
    for artifact injection, and one (a torch generator) for the timesteps,
    noise and dropout draws. Runs that differ only by their mask library
    share every stream except the injection one.

    Parameters
    ----------
    model : `DenoiserModel` instance

    schedule : `NoiseSchedule` instance

    pairs : list of `TrainingPair`
        Clean training pairs.

    library : `MaskLibrary` instance (optional)
        Artifact masks injected into the conditions; `None` disables the
        injection.
    """
    def __init__(self,
                 model,
                 schedule,
                 pairs,
                 library=None,
                 p_drop=0.1,
                 p_inject=0.4,
                 lr=1e-3,
                 weight_decay=0.,
                 batch_size=8,
                 seed=0):
        self.pairs = list(pairs)
        if not self.pairs:
            raise ValueError('The trainer needs at least one training pair.')
        if int(batch_size) < 1:
            raise ValueError('The batch size must be positive, got '
                             '{0}.'.format(batch_size))
        self.model = model
        self.schedule = schedule
        self.library = library
        self.p_drop = p_drop
        self.p_inject = p_inject
        self.batch_size = int(batch_size)
        self.seed = seed

        batch_seed, injection_seed, noise_seed = np.random.SeedSequence(seed).spawn(3)
        self.batch_rng = np.random.default_rng(batch_seed)
        self.injection_rng = np.random.default_rng(injection_seed)
        self.generator = make_generator(noise_seed.generate_state(1)[0])

        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=lr,
                                           weight_decay=weight_decay)

    def sample_batch(self):
        indices = self.batch_rng.integers(len(self.pairs), size=self.batch_size)
        batch, mask_indices = [], []
        for index in indices:
            pair = self.pairs[index]
            condition, mask_index = pair.condition, None
            if self.library is not None:
                condition, mask_index = inject_artifact(condition, self.library,
                    self.p_inject, self.injection_rng)
            batch.append(TrainingPair(condition, pair.target, weight=pair.weight))
            mask_indices.append(mask_index)
        return [int(index) for index in indices], batch, mask_indices

    def step(self):
        batch_indices, batch, mask_indices = self.sample_batch()
        logs = {}
        loss, gradient = training_loss(self.model, batch, self.schedule,
            self.p_drop, self.generator, logs=logs)

        self.optimizer.zero_grad()
        vector_to_gradients(gradient, self.model.parameters())
        self.optimizer.step()

        logs.update(loss=loss,
                    batch_indices=batch_indices,
                    mask_indices=mask_indices,
                    injected=[index is not None for index in mask_indices])
        del logs['sample_losses']
        return logs
