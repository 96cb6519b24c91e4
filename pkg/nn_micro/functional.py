import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from event_data.errors import ShapeError
from nn_micro.tensor import as_tensor, make_output

"""
forward ops with their backward rules
"""


def _pair(value):
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def reshape(x, shape):
    x = as_tensor(x)
    in_shape = x.data.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError("cannot reshape %s to %s" % (in_shape, tuple(shape))) from e
    return make_output(data, (x,), lambda g: (g.reshape(in_shape),))


def transpose(x, axes):
    x = as_tensor(x)
    inverse = np.argsort(axes)
    return make_output(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_output(data, tuple(tensors), backward)


def mean(x, axis):
    x = as_tensor(x)
    shape = x.data.shape
    count = shape[axis]

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / count, shape).copy(),)

    return make_output(x.data.mean(axis=axis), (x,), backward)


def conv2d(x, weight, bias=None, padding=0, method="im2col"):
    """
    2D cross-correlation with zero padding and stride 1

    :param x:       N x C_in x H x W (or C_in x H x W)
    :param weight:  C_out x C_in x KH x KW
    :param bias:    C_out or None
    :param padding: int or (ph, pw)
    :param method:  "im2col" (patch matrix) or "direct" (loop over kernel taps)
    :return: N x C_out x H' x W'
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects a 4D input and 4D weights, got %s and %s" % (x.dims, weight.dims))
    n, c_in, h, w = xd.shape
    c_out, c_w, kh, kw = weight.data.shape
    if c_w != c_in:
        raise ShapeError("conv2d input has %d channels, weights expect %d" % (c_in, c_w))
    if bias is not None and as_tensor(bias).data.shape != (c_out,):
        raise ShapeError("conv2d bias must have shape (%d,)" % c_out)
    ph, pw = _pair(padding)
    h_out, w_out = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError("kernel %dx%d larger than padded input %dx%d" % (kh, kw, h + 2 * ph, w + 2 * pw))
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    wd = weight.data

    if method == "im2col":
        cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N x C x H' x W' x KH x KW
        out = np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    elif method == "direct":
        out = np.zeros((n, h_out, w_out, c_out), dtype=np.result_type(xp, wd))
        for i in range(kh):
            for j in range(kw):
                out += np.tensordot(xp[:, :, i:i + h_out, j:j + w_out], wd[:, :, i, j], axes=([1], [1]))
        out = out.transpose(0, 3, 1, 2)
    else:
        raise ValueError("unknown conv2d method '%s'" % method)
    out = np.ascontiguousarray(out)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[None, :, None, None]
        inputs.append(bias)
    if squeeze:
        out = out[0]

    def backward(g):
        g4 = g[None] if squeeze else g
        gw = np.zeros_like(wd)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i:i + h_out, j:j + w_out]
                gw[:, :, i, j] = np.tensordot(g4, patch, axes=([0, 2, 3], [0, 2, 3]))
                gxp[:, :, i:i + h_out, j:j + w_out] += np.tensordot(g4, wd[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
        gx = gxp[:, :, ph:ph + h, pw:pw + w]
        if squeeze:
            gx = gx[0]
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_output(out, tuple(inputs), backward)


def conv1d(x, weight, bias=None, padding=0, method="im2col"):
    """
    1D cross-correlation, computed as conv2d over a height-1 image

    :param x:       N x C_in x L (or C_in x L)
    :param weight:  C_out x C_in x K
    :return: N x C_out x L'
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.dims)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError("conv1d expects a 3D input and 3D weights")
    n, c, length = x.dims
    x4 = reshape(x, (n, c, 1, length))
    w4 = reshape(weight, weight.dims[:2] + (1, weight.dims[2]))
    out = conv2d(x4, w4, bias, padding=(0, int(padding)), method=method)
    out = reshape(out, (n, out.dims[1], out.dims[3]))
    if squeeze:
        out = reshape(out, out.dims[1:])
    return out


def linear(x, weight, bias=None):
    """
    affine map y = x W^T + b with x of shape N x D and W of shape O x D
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.dims[-1] != weight.dims[1]:
        raise ShapeError("linear input has %d features, weights expect %d" % (x.dims[-1], weight.dims[1]))
    out = x.data @ weight.data.T
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        inputs.append(bias)

    def backward(g):
        grads = [g @ weight.data, g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.dims[-1])]
        if bias is not None:
            grads.append(g.reshape(-1, g.shape[-1]).sum(axis=0))
        return tuple(grads)

    return make_output(out, tuple(inputs), backward)


def grouped_conv1x1(x, weight, bias=None):
    """
    grouped 1x1 convolution: g independent affine maps over consecutive feature blocks

    :param x:       N x (g*D)
    :param weight:  g x K x D
    :param bias:    g x K or None
    :return: N x (g*K), block i depends only on input block i
    """
    x, weight = as_tensor(x), as_tensor(weight)
    groups, k, d = weight.dims
    n, features = x.dims
    if features % groups != 0:
        raise ShapeError("%d input features are not divisible into %d groups" % (features, groups))
    if features // groups != d:
        raise ShapeError("group width %d does not match weights (%d)" % (features // groups, d))
    xg = x.data.reshape(n, groups, d)
    out = np.einsum('ngd,gkd->ngk', xg, weight.data)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None]
        inputs.append(bias)

    def backward(g):
        g3 = g.reshape(n, groups, k)
        grads = [np.einsum('ngk,gkd->ngd', g3, weight.data).reshape(n, features),
                 np.einsum('ngk,ngd->gkd', g3, xg)]
        if bias is not None:
            grads.append(g3.sum(axis=0))
        return tuple(grads)

    return make_output(out.reshape(n, groups * k), tuple(inputs), backward)


def leaky_relu(x, alpha=0.01):
    x = as_tensor(x)
    positive = x.data > 0
    out = np.where(positive, x.data, alpha * x.data)
    return make_output(out, (x,), lambda g: (np.where(positive, g, alpha * g),))


def _max_over_last(windows):
    """
    max and first argmax over the last axis
    """
    idx = np.argmax(windows, axis=-1)
    return np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0], idx


def max_pool1d(x, size):
    """
    non-overlapping max pooling over the last axis, trailing elements that do not fill a window are dropped
    """
    x = as_tensor(x)
    length = x.dims[-1]
    if size < 1 or size > length:
        raise ShapeError("pool size %d does not fit a sequence of length %d" % (size, length))
    l_out = length // size
    lead = x.dims[:-1]
    windows = x.data[..., :l_out * size].reshape(lead + (l_out, size))
    out, idx = _max_over_last(windows)

    def backward(g):
        gw = np.zeros(lead + (l_out, size), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros(x.dims, dtype=g.dtype)
        gx[..., :l_out * size] = gw.reshape(lead + (l_out * size,))
        return (gx,)

    return make_output(out, (x,), backward)


def max_pool2d(x, size=2):
    """
    non-overlapping max pooling over the last two axes
    """
    x = as_tensor(x)
    h, w = x.dims[-2:]
    if size < 1 or size > h or size > w:
        raise ShapeError("pool size %d does not fit a %dx%d map" % (size, h, w))
    ho, wo = h // size, w // size
    lead = x.dims[:-2]
    nl = len(lead)
    blocks = x.data[..., :ho * size, :wo * size].reshape(lead + (ho, size, wo, size))
    order = tuple(range(nl)) + (nl, nl + 2, nl + 1, nl + 3)
    windows = blocks.transpose(order).reshape(lead + (ho, wo, size * size))
    out, idx = _max_over_last(windows)

    def backward(g):
        gw = np.zeros(lead + (ho, wo, size * size), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gb = gw.reshape(lead + (ho, wo, size, size)).transpose(order)
        gx = np.zeros(x.dims, dtype=g.dtype)
        gx[..., :ho * size, :wo * size] = gb.reshape(lead + (ho * size, wo * size))
        return (gx,)

    return make_output(out, (x,), backward)


def _move_reduced_last(data, axes):
    axes = tuple(a % data.ndim for a in np.atleast_1d(axes))
    keep = tuple(a for a in range(data.ndim) if a not in axes)
    moved = data.transpose(keep + axes)
    return moved.reshape(moved.shape[:len(keep)] + (-1,)), keep + axes, moved.shape


def global_max(x, axis=-1):
    """
    max over the given axis (or axes), gradient routed to the first maximal position
    """
    x = as_tensor(x)
    flat, order, moved_shape = _move_reduced_last(x.data, axis)
    out, idx = _max_over_last(flat)

    def backward(g):
        gf = np.zeros(flat.shape, dtype=g.dtype)
        np.put_along_axis(gf, idx[..., None], g[..., None], axis=-1)
        return (gf.reshape(moved_shape).transpose(np.argsort(order)),)

    return make_output(out, (x,), backward)


def global_avg(x, axis=(-2, -1)):
    """
    mean over the given axes, by default the spatial axes of an N x C x H x W map
    """
    x = as_tensor(x)
    flat, order, moved_shape = _move_reduced_last(x.data, axis)
    count = flat.shape[-1]

    def backward(g):
        gf = np.broadcast_to(g[..., None] / count, flat.shape)
        return (np.ascontiguousarray(gf.reshape(moved_shape).transpose(np.argsort(order))),)

    return make_output(flat.mean(axis=-1), (x,), backward)


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, target):
    """
    mean of -log softmax(logits)[target] over the batch

    :param logits:  N x K (or K)
    :param target:  N class ids (or one id)
    :return: scalar loss, gradient (softmax - onehot) / N
    """
    logits = as_tensor(logits)
    squeeze = logits.ndim == 1
    z = logits.data[None] if squeeze else logits.data
    target = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, k = z.shape
    if target.shape != (n,):
        raise ShapeError("expected %d targets, got %s" % (n, target.shape))
    if np.any(target < 0) or np.any(target >= k):
        raise ShapeError("target class out of range [0, %d): %s" % (k, target))
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = np.mean(log_norm - shifted[np.arange(n), target])
    probs = softmax(z)

    def backward(g):
        grad = probs.copy()
        grad[np.arange(n), target] -= 1.0
        grad *= g / n
        return (grad[0] if squeeze else grad,)

    return make_output(np.asarray(loss, dtype=z.dtype), (logits,), backward)
