import threading
from contextlib import contextmanager

import numpy as np

"""
differentiable tensors and the reverse-mode tape

Each forward op appends one record (output, inputs, backward function) to the active tape of the current
thread. Tape.backward walks the records in reverse and accumulates gradients into the inputs.
"""

_state = threading.local()
_DTYPES = {"float32": np.float32, "float64": np.float64}


def default_dtype():
    return getattr(_state, "dtype", np.float32)


@contextmanager
def precision(name):
    """
    switch the default floating point type of the current thread, "float64" is the oracle check mode
    """
    if name not in _DTYPES:
        raise ValueError("precision must be one of %s" % list(_DTYPES))
    previous = default_dtype()
    _state.dtype = _DTYPES[name]
    try:
        yield
    finally:
        _state.dtype = previous


class ValueTensor:
    """
    numpy array with an optional gradient buffer of the same shape
    """

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def dims(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad):
        if grad.shape != self.data.shape:
            raise ValueError("gradient shape %s does not match tensor shape %s" % (grad.shape, self.data.shape))
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad += grad

    def __repr__(self):
        return "ValueTensor(dims=%s, requires_grad=%s)" % (self.dims, self.requires_grad)


class Parameter(ValueTensor):
    """
    named model weight; names are assigned by Module.named_parameters
    """

    def __init__(self, data, name="", trainable=True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self):
        return "Parameter(%s, dims=%s)" % (self.name, self.dims)


def as_tensor(x):
    if isinstance(x, ValueTensor):
        return x
    return ValueTensor(x)


class Tape:
    """
    records differentiable ops while it is the active tape (use as context manager)
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tapes.pop()
        return False

    def record(self, output, inputs, backward):
        self.records.append((output, inputs, backward))

    def backward(self, loss, grad=None):
        """
        propagate d(loss)/d(.) to every recorded input that requires a gradient
        """
        if grad is None:
            if loss.data.size != 1:
                raise ValueError("backward without explicit gradient needs a scalar loss, got %s" % (loss.dims,))
            grad = np.ones_like(loss.data)
        loss.accumulate_grad(np.asarray(grad, dtype=loss.data.dtype))
        for output, inputs, backward in reversed(self.records):
            if output.grad is None:
                continue
            grads = backward(output.grad)
            for tensor, g in zip(inputs, grads):
                if g is not None and tensor.requires_grad:
                    tensor.accumulate_grad(g)

    def clear(self):
        self.records = []


def active_tape():
    stack = getattr(_state, "tapes", None)
    if stack:
        return stack[-1]
    return None


def make_output(data, inputs, backward):
    """
    wrap an op result and record it on the active tape if any input needs a gradient
    """
    requires_grad = any(t.requires_grad for t in inputs)
    out = ValueTensor.__new__(ValueTensor)
    out.data = data
    out.requires_grad = requires_grad
    out.grad = None
    tape = active_tape()
    if requires_grad and tape is not None:
        tape.record(out, inputs, backward)
    return out
