import numpy as np
import torch

LATENT_SCALE = 4
LATENT_CHANNELS = 3
CONDITION_CHANNELS = 5


class ConditionEncoding(object):
    """Condition features fed to the denoiser: three content channels, one
    coverage channel and one null-indicator channel."""
    def __init__(self, tensor, is_null=False):
        if (tensor.dim() != 3) or (tensor.shape[0] != CONDITION_CHANNELS):
            raise ValueError('Expected a {0}xHxW condition encoding, got shape '
                             '{1}.'.format(CONDITION_CHANNELS, tuple(tensor.shape)))
        if not bool(torch.all(torch.isfinite(tensor))):
            raise ValueError('The condition encoding must be finite.')
        self.tensor = tensor
        self.is_null = bool(is_null)

    @property
    def shape(self):
        return self.tensor.shape


def latent_resolution(resolution):
    height, width = resolution
    if (height % LATENT_SCALE) or (width % LATENT_SCALE):
        raise ValueError('The image size {0}x{1} is not a multiple of '
                         '{2}.'.format(height, width, LATENT_SCALE))
    return (height // LATENT_SCALE, width // LATENT_SCALE)


def _pool(x):
    # Two pairwise 2x halvings: exact on block-constant inputs
    for _ in range(2):
        x = 0.5 * (x[..., 0::2, :] + x[..., 1::2, :])
        x = 0.5 * (x[..., :, 0::2] + x[..., :, 1::2])
    return x


def _to_channels_first(image):
    image = torch.as_tensor(np.asarray(image, dtype=np.float64))
    if image.dim() == 2:
        image = image.unsqueeze(-1)
    return image.permute(2, 0, 1)


def encode_image(image):
    """Latent-lite encoder: 4x average pooling, then `[0, 1] -> [-1, 1]`."""
    image = np.asarray(image, dtype=np.float64)
    if (image.ndim != 3) or (image.shape[2] != 3):
        raise ValueError('Expected a HxWx3 image, got shape {0}.'.format(image.shape))
    if not np.all((image >= 0) & (image <= 1)):
        raise ValueError('The image values must be in [0, 1].')
    latent_resolution(image.shape[:2])
    return 2. * _pool(_to_channels_first(image)) - 1.


def decode_latent(z):
    """Nearest 4x upsampling and `[-1, 1] -> [0, 1]`, clamped. Returns a
    HxWx3 array."""
    if not bool(torch.all(torch.isfinite(z))):
        raise ValueError('The latent must be finite.')
    upsampled = z.repeat_interleave(LATENT_SCALE, dim=-2)
    upsampled = upsampled.repeat_interleave(LATENT_SCALE, dim=-1)
    image = torch.clamp((upsampled + 1.) / 2., 0., 1.)
    return image.permute(1, 2, 0).detach().cpu().numpy()


def encode_condition(x):
    """Condition encoder: pooled rgb (as `encode_image`), pooled validity
    (coverage) and a zero null-indicator channel."""
    content = encode_image(x.rgb)
    coverage = _pool(_to_channels_first(x.validity.astype(np.float64)))
    indicator = torch.zeros_like(coverage)
    return ConditionEncoding(torch.cat([content, coverage, indicator], dim=0),
                             is_null=False)


def null_condition(resolution):
    """Null condition token: zero content and coverage, indicator set to 1."""
    height, width = latent_resolution(resolution)
    tensor = torch.zeros((CONDITION_CHANNELS, height, width), dtype=torch.float64)
    tensor[-1] = 1.
    return ConditionEncoding(tensor, is_null=True)
