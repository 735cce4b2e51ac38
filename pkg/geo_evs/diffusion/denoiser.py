import math
import torch
import torch.nn as nn
import torch.nn.functional as F

from collections import OrderedDict

from geo_evs.diffusion.latent import LATENT_CHANNELS, CONDITION_CHANNELS


def weight_init(module):
    if isinstance(module, (nn.Linear, nn.Conv2d)):
        nn.init.xavier_uniform_(module.weight)
        module.bias.data.zero_()


def get_nonlinearity(name):
    if hasattr(torch, name):
        return getattr(torch, name)
    return getattr(F, name)


def timestep_embedding(t, size):
    """Sinusoidal embedding of the (real-valued) timesteps `t`."""
    t = torch.as_tensor(t, dtype=torch.float64).view(-1)
    half = size // 2
    frequencies = torch.exp(-math.log(10000.) * torch.arange(half,
        dtype=torch.float64) / max(half, 1))
    arguments = t[:, None] * frequencies[None]
    embedding = torch.cat([torch.sin(arguments), torch.cos(arguments)], dim=1)
    if size % 2:
        embedding = F.pad(embedding, (0, 1))
    return embedding


class DenoiserModel(nn.Module):
    """Small convolutional residual network predicting the noise from the
    channel concatenation `[z_t ⊕ c]`.

    An input convolution maps the concatenation to `hidden_channels`; each of
    the `num_stages` residual stages adds a projection of the sinusoidal
    timestep embedding before its convolution; an output convolution maps
    back to the latent channels. Every layer is linear with a bias and the
    nonlinearity vanishes at 0, so all-zero parameters give an all-zero
    output.
    """
    def __init__(self,
                 latent_channels=LATENT_CHANNELS,
                 condition_channels=CONDITION_CHANNELS,
                 hidden_channels=32,
                 num_stages=2,
                 time_embedding_size=32,
                 kernel_size=3,
                 nonlinearity='silu'):
        super(DenoiserModel, self).__init__()
        if kernel_size % 2 == 0:
            raise ValueError('The kernel size must be odd, got '
                             '{0}.'.format(kernel_size))
        self.latent_channels = latent_channels
        self.condition_channels = condition_channels
        self.hidden_channels = hidden_channels
        self.num_stages = num_stages
        self.time_embedding_size = time_embedding_size
        self.kernel_size = kernel_size
        self.nonlinearity_name = nonlinearity
        self.nonlinearity = get_nonlinearity(nonlinearity)
        self.padding = kernel_size // 2

        self.add_module('input', nn.Conv2d(latent_channels + condition_channels,
            hidden_channels, kernel_size, padding=self.padding))
        for i in range(1, num_stages + 1):
            self.add_module('time{0}'.format(i),
                            nn.Linear(time_embedding_size, hidden_channels))
            self.add_module('stage{0}'.format(i), nn.Conv2d(hidden_channels,
                hidden_channels, kernel_size, padding=self.padding))
        self.add_module('output', nn.Conv2d(hidden_channels, latent_channels,
            kernel_size, padding=self.padding))

        self.apply(weight_init)
        self.double()

    @property
    def architecture(self):
        return OrderedDict([
            ('latent_channels', self.latent_channels),
            ('condition_channels', self.condition_channels),
            ('hidden_channels', self.hidden_channels),
            ('num_stages', self.num_stages),
            ('time_embedding_size', self.time_embedding_size),
            ('kernel_size', self.kernel_size),
            ('nonlinearity', self.nonlinearity_name),
        ])

    @property
    def num_parameters(self):
        return sum(param.numel() for param in self.parameters())

    @property
    def receptive_field_radius(self):
        """Chebyshev radius (in latent pixels) of the inputs an output pixel
        depends on."""
        return self.padding * (self.num_stages + 2)

    def forward(self, z_t, t, c, params=None):
        if params is None:
            params = OrderedDict(self.named_parameters())

        embedding = timestep_embedding(t, self.time_embedding_size)
        hidden = F.conv2d(torch.cat([z_t, c], dim=1),
                          weight=params['input.weight'],
                          bias=params['input.bias'],
                          padding=self.padding)
        for i in range(1, self.num_stages + 1):
            time_bias = F.linear(embedding,
                                 weight=params['time{0}.weight'.format(i)],
                                 bias=params['time{0}.bias'.format(i)])
            output = self.nonlinearity(hidden + time_bias[:, :, None, None])
            hidden = hidden + F.conv2d(output,
                                       weight=params['stage{0}.weight'.format(i)],
                                       bias=params['stage{0}.bias'.format(i)],
                                       padding=self.padding)

        return F.conv2d(self.nonlinearity(hidden),
                        weight=params['output.weight'],
                        bias=params['output.bias'],
                        padding=self.padding)


def denoise_predict(model, z_t, t, c):
    """Noise prediction `eps_theta([z_t ⊕ c], t)` for a single latent."""
    expected = (model.latent_channels,) + tuple(z_t.shape[1:])
    if (z_t.dim() != 3) or (tuple(z_t.shape) != expected):
        raise ValueError('Expected a latent of shape {0}, got '
                         '{1}.'.format(expected, tuple(z_t.shape)))
    expected = (model.condition_channels,) + tuple(z_t.shape[1:])
    if tuple(c.tensor.shape) != expected:
        raise ValueError('Expected a condition encoding of shape {0}, got '
                         '{1}.'.format(expected, tuple(c.tensor.shape)))
    t = torch.tensor([float(t)], dtype=torch.float64)
    return model(z_t.unsqueeze(0), t, c.tensor.unsqueeze(0))[0]
