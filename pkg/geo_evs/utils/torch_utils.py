import torch

from torch.nn.utils.convert_parameters import _check_param_device


def weighted_mean(tensor, weights=None):
    """Mean of the per-sample values of `tensor` (first dimension), each
    scaled by its weight: `(1/B) sum_i w_i tensor_i`."""
    if weights is None:
        return torch.mean(tensor)
    weights = torch.as_tensor(weights, dtype=tensor.dtype)
    if weights.shape != tensor.shape[:1]:
        raise ValueError('Expected {0} weights, got shape '
                         '{1}.'.format(tensor.shape[0], tuple(weights.shape)))
    return torch.sum(weights * tensor) / tensor.shape[0]


def vector_to_parameters(vector, parameters):
    param_device = None

    pointer = 0
    for param in parameters:
        param_device = _check_param_device(param, param_device)

        num_param = param.numel()
        param.data.copy_(vector[pointer:pointer + num_param]
                         .view_as(param).data)

        pointer += num_param

    if pointer != vector.numel():
        raise ValueError('The vector has {0} entries, but the parameters have '
                         '{1}.'.format(vector.numel(), pointer))


def vector_to_gradients(vector, parameters):
    """Write the flat `vector` into the `.grad` fields of `parameters`."""
    pointer = 0
    for param in parameters:
        num_param = param.numel()
        param.grad = vector[pointer:pointer + num_param].view_as(param).clone()
        pointer += num_param


def make_generator(seed):
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator
