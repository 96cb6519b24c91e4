from collections import OrderedDict

import numpy as np

from event_data.errors import ShapeError
from nn_micro import functional as F
from nn_micro.tensor import Parameter, default_dtype

"""
layer containers with named parameters
"""


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class Module:
    """
    base class of all layers; parameters and sub-modules are discovered from the attributes in definition order
    """

    def __init__(self):
        self.training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value

    def named_parameters(self, prefix=""):
        params = OrderedDict()
        for key, value in self._children():
            name = prefix + key
            if isinstance(value, Parameter):
                value.name = name
                params[name] = value
            else:
                params.update(value.named_parameters(name + "."))
        return params

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode=True):
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self):
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters().items())

    def load_state_dict(self, state):
        """
        copy arrays into the parameters, names and shapes must match exactly
        """
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ShapeError("state mismatch, missing %s, unexpected %s" % (missing, unexpected))
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.dims:
                raise ShapeError("parameter %s has shape %s, state has %s" % (name, p.dims, value.shape))
            p.data = value.astype(p.data.dtype, copy=True)


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self.items = list(modules)

    def _children(self):
        for i, module in enumerate(self.items):
            yield str(i), module

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, idx):
        return self.items[idx]


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, padding=0, rng=None, method="im2col"):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(uniform_init(rng, (out_channels,), fan_in))
        self.padding = padding
        self.method = method

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, padding=self.padding, method=self.method)


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, padding=0, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        fan_in = in_channels * kernel_size
        self.weight = Parameter(uniform_init(rng, (out_channels, in_channels, kernel_size), fan_in))
        self.bias = Parameter(uniform_init(rng, (out_channels,), fan_in))
        self.padding = padding

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, padding=self.padding)


class Linear(Module):
    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.weight = Parameter(uniform_init(rng, (out_features, in_features), in_features))
        self.bias = Parameter(uniform_init(rng, (out_features,), in_features))

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class GroupedLinear(Module):
    """
    g independent affine maps, computed as one grouped 1x1 convolution
    """

    def __init__(self, groups, in_features, out_features, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.groups = groups
        self.weight = Parameter(uniform_init(rng, (groups, out_features, in_features), in_features))
        self.bias = Parameter(uniform_init(rng, (groups, out_features), in_features))

    def forward(self, x):
        return F.grouped_conv1x1(x, self.weight, self.bias)
