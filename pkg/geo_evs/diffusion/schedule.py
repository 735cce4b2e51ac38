import torch
import torch.nn.functional as F


class NoiseSchedule(object):
    """Variance schedule of the forward (noising) process.

    Timesteps are 1-based: `t = 1, ..., num_train_steps`, and `alpha_bar(0)`
    is 1 by convention (the clean latent).

    Parameters
    ----------
    num_train_steps : int
        Number of training timesteps `T_train`.

    beta_start, beta_end : float
        End points of the linear schedule of the betas.

    betas : sequence of float (optional)
        Explicit betas, overriding the linear schedule.
    """
    def __init__(self, num_train_steps=1000, beta_start=1e-4, beta_end=0.02,
                 betas=None):
        if betas is None:
            betas = torch.linspace(beta_start, beta_end, int(num_train_steps),
                                   dtype=torch.float64)
        betas = torch.as_tensor(betas, dtype=torch.float64).flatten()
        if betas.numel() < 1:
            raise ValueError('The schedule needs at least one timestep.')
        if not bool(torch.all((betas > 0) & (betas < 1))):
            raise ValueError('The betas must be in (0, 1).')
        if not bool(torch.all(betas[1:] > betas[:-1])):
            raise ValueError('The betas must be strictly increasing.')

        self.betas = betas
        self.alphas = 1. - betas
        self.alphas_cumprod = torch.cumprod(self.alphas, dim=0)
        if self.alphas_cumprod[-1].item() >= 0.05:
            raise ValueError('The schedule does not destroy the signal: '
                             'alpha_bar(T_train) = {0:.4f} >= 0.05.'.format(
                             self.alphas_cumprod[-1].item()))
        self._alphas_cumprod = F.pad(self.alphas_cumprod, (1, 0), value=1.)

    @property
    def num_train_steps(self):
        return self.betas.numel()

    def check_timestep(self, t):
        t = torch.as_tensor(t)
        if bool(torch.any((t < 1) | (t > self.num_train_steps))):
            raise ValueError('Timesteps must be in [1, {0}], got {1}.'.format(
                             self.num_train_steps, t.tolist()))

    def alpha_bar(self, t):
        """Cumulative product of the alphas up to `t` (1 at `t = 0`)."""
        return self._alphas_cumprod[torch.as_tensor(t, dtype=torch.long)]

    def to_dict(self):
        return {'t_train': self.num_train_steps,
                'beta_start': self.betas[0].item(),
                'beta_end': self.betas[-1].item()}


def add_noise(z0, t, eps, schedule):
    """Sample `z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps`.

    `t` is either an integer (for a single latent) or a tensor of one timestep
    per latent of a batch."""
    if eps.shape != z0.shape:
        raise ValueError('The noise of shape {0} does not match the latent of '
                         'shape {1}.'.format(tuple(eps.shape), tuple(z0.shape)))
    schedule.check_timestep(t)
    alpha_bar = schedule.alpha_bar(t)
    if alpha_bar.dim() > 0:
        alpha_bar = alpha_bar.view(-1, *((1,) * (z0.dim() - 1)))
    return torch.sqrt(alpha_bar) * z0 + torch.sqrt(1. - alpha_bar) * eps
