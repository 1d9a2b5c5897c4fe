# -*- coding: utf-8 -*-
"""Layers with analytic gradients.

Activations are NHWC arrays (batch, height, width, channels); dense layers
take (batch, features). ``forward`` caches what ``backward`` needs, so a
layer instance serves one forward/backward pair at a time. Parameter
gradients accumulate into ``Tensor.grad``; call :meth:`Layer.zero_grad`
between steps.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..exceptions import InvalidInputError, ShapeError
from .tensor import TRAIN_DTYPE, Tensor, he_uniform

SAME = 'same'
VALID = 'valid'


def conv_output_size(size, kernel, stride, padding):
    """Return ``(out, pad_before, pad_after)`` along one axis."""
    if padding == SAME:
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return out, total // 2, total - total // 2
    if padding == VALID:
        if size < kernel:
            raise ShapeError('input smaller than kernel', (kernel,), (size,))
        return (size - kernel) // stride + 1, 0, 0
    raise InvalidInputError('unknown padding {0!r}'.format(padding))


def _rng(rng):
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    return rng


class Layer(object):
    """Base class: a differentiable map with optional parameters."""

    def __init__(self, name=None):
        """Name the layer; parameters are declared by subclasses."""
        self.name = name or type(self).__name__.lower()
        self._cache = None

    def parameters(self):
        """Return the trainable tensors."""
        return []

    def named_parameters(self, prefix=''):
        """Return ``(qualified_name, tensor)`` pairs."""
        return [(prefix + p.name, p) for p in self.parameters()]

    def zero_grad(self):
        """Reset all parameter gradients."""
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x):
        """Compute the output for ``x`` and cache for backward."""
        raise NotImplementedError

    def backward(self, grad):
        """Return the input gradient, accumulating parameter gradients."""
        raise NotImplementedError

    def output_shape(self, input_shape):
        """Return the per-sample output shape for a per-sample input shape."""
        return tuple(input_shape)

    def macs(self, input_shape):
        """Multiply-accumulates of one forward pass on one sample."""
        return 0

    def __call__(self, x):
        """Alias of :meth:`forward`."""
        return self.forward(x)

    def _check_rank(self, x, rank):
        if x.ndim != rank:
            raise ShapeError('%s expects a rank-%d input' % (self.name, rank),
                             ('?',) * rank, x.shape)

    def _check_channels(self, x, channels):
        if x.shape[-1] != channels:
            raise ShapeError('%s channel mismatch' % self.name,
                             x.shape[:-1] + (channels,), x.shape)


class Conv2D(Layer):
    """Standard 2D convolution, kernel stored as (k, k, in, out)."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding=SAME, use_bias=True, rng=None, dtype=TRAIN_DTYPE,
                 name=None):
        """Create the layer with fan-in uniform weights and zero bias."""
        super(Conv2D, self).__init__(name)
        if min(in_channels, out_channels, kernel_size, stride) < 1:
            raise InvalidInputError('conv dimensions must be positive')
        k = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = k
        self.stride = stride
        self.padding = padding
        self.kernel = Tensor(
            he_uniform((k, k, in_channels, out_channels),
                       k * k * in_channels, _rng(rng), dtype), 'kernel')
        self.bias = Tensor(np.zeros(out_channels, dtype), 'bias') \
            if use_bias else None

    def parameters(self):
        """Return kernel and bias."""
        return [p for p in (self.kernel, self.bias) if p is not None]

    def _geometry(self, h, w):
        oh, pt, pb = conv_output_size(h, self.kernel_size, self.stride,
                                      self.padding)
        ow, pl, pr = conv_output_size(w, self.kernel_size, self.stride,
                                      self.padding)
        return oh, ow, ((0, 0), (pt, pb), (pl, pr), (0, 0))

    def forward(self, x):
        """Convolve ``x``."""
        self._check_rank(x, 4)
        self._check_channels(x, self.in_channels)
        k, s = self.kernel_size, self.stride
        oh, ow, pads = self._geometry(x.shape[1], x.shape[2])
        xp = np.pad(x, pads)
        W = self.kernel.values
        if k == 1:
            win = xp[:, ::s, ::s, :][:, :oh, :ow, :]
            y = win.dot(W[0, 0])
        else:
            win = sliding_window_view(xp, (k, k), axis=(1, 2))
            win = win[:, ::s, ::s][:, :oh, :ow]
            y = np.einsum('bhwcij,ijco->bhwo', win, W, optimize=True)
        if self.bias is not None:
            y = y + self.bias.values
        self._cache = (xp.shape, pads, win)
        return y

    def backward(self, grad):
        """Backpropagate through the convolution."""
        xp_shape, pads, win = self._cache
        k, s = self.kernel_size, self.stride
        W = self.kernel.values
        b, oh, ow, _ = grad.shape
        if k == 1:
            dW = win.reshape(-1, self.in_channels).T.dot(
                grad.reshape(-1, self.out_channels))
            self.kernel.accumulate(dW.reshape(W.shape))
        else:
            self.kernel.accumulate(
                np.einsum('bhwcij,bhwo->ijco', win, grad, optimize=True))
        if self.bias is not None:
            self.bias.accumulate(grad.sum(axis=(0, 1, 2)))

        dxp = np.zeros(xp_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * oh:s, j:j + s * ow:s, :] += \
                    grad.dot(W[i, j].T)
        return _unpad(dxp, pads)

    def output_shape(self, input_shape):
        """Return (out_h, out_w, out_channels)."""
        oh, ow, _ = self._geometry(input_shape[0], input_shape[1])
        return (oh, ow, self.out_channels)

    def macs(self, input_shape):
        """Return out_h * out_w * out_c * k * k * in_c."""
        oh, ow, _ = self.output_shape(input_shape)
        return oh * ow * self.out_channels * self.kernel_size ** 2 * \
            self.in_channels


class DepthwiseConv2D(Layer):
    """Per-channel 2D convolution, kernel stored as (k, k, channels)."""

    def __init__(self, channels, kernel_size=5, stride=1, padding=SAME,
                 use_bias=True, rng=None, dtype=TRAIN_DTYPE, name=None):
        """Create the layer with fan-in uniform weights and zero bias."""
        super(DepthwiseConv2D, self).__init__(name)
        if min(channels, kernel_size, stride) < 1:
            raise InvalidInputError('depthwise dimensions must be positive')
        k = kernel_size
        self.channels = channels
        self.kernel_size = k
        self.stride = stride
        self.padding = padding
        self.kernel = Tensor(he_uniform((k, k, channels), k * k, _rng(rng),
                                        dtype), 'kernel')
        self.bias = Tensor(np.zeros(channels, dtype), 'bias') \
            if use_bias else None

    def parameters(self):
        """Return kernel and bias."""
        return [p for p in (self.kernel, self.bias) if p is not None]

    def _geometry(self, h, w):
        oh, pt, pb = conv_output_size(h, self.kernel_size, self.stride,
                                      self.padding)
        ow, pl, pr = conv_output_size(w, self.kernel_size, self.stride,
                                      self.padding)
        return oh, ow, ((0, 0), (pt, pb), (pl, pr), (0, 0))

    def forward(self, x):
        """Convolve each channel of ``x`` with its own kernel."""
        self._check_rank(x, 4)
        self._check_channels(x, self.channels)
        k, s = self.kernel_size, self.stride
        oh, ow, pads = self._geometry(x.shape[1], x.shape[2])
        xp = np.pad(x, pads)
        win = sliding_window_view(xp, (k, k), axis=(1, 2))
        win = win[:, ::s, ::s][:, :oh, :ow]
        y = np.einsum('bhwcij,ijc->bhwc', win, self.kernel.values,
                      optimize=True)
        if self.bias is not None:
            y = y + self.bias.values
        self._cache = (xp.shape, pads, win)
        return y

    def backward(self, grad):
        """Backpropagate through the depthwise convolution."""
        xp_shape, pads, win = self._cache
        k, s = self.kernel_size, self.stride
        W = self.kernel.values
        _, oh, ow, _ = grad.shape
        self.kernel.accumulate(
            np.einsum('bhwcij,bhwc->ijc', win, grad, optimize=True))
        if self.bias is not None:
            self.bias.accumulate(grad.sum(axis=(0, 1, 2)))
        dxp = np.zeros(xp_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * oh:s, j:j + s * ow:s, :] += grad * W[i, j]
        return _unpad(dxp, pads)

    def output_shape(self, input_shape):
        """Return (out_h, out_w, channels)."""
        oh, ow, _ = self._geometry(input_shape[0], input_shape[1])
        return (oh, ow, self.channels)

    def macs(self, input_shape):
        """Return out_h * out_w * channels * k * k."""
        oh, ow, _ = self.output_shape(input_shape)
        return oh * ow * self.channels * self.kernel_size ** 2


class Conv2DTranspose(Layer):
    """Transposed convolution (fractionally strided), kernel (k, k, in, out).

    ``'valid'`` yields (h - 1) * stride + k rows; ``'same'`` crops that to
    h * stride.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=2,
                 padding=SAME, use_bias=True, rng=None, dtype=TRAIN_DTYPE,
                 name=None):
        """Create the layer with fan-in uniform weights and zero bias."""
        super(Conv2DTranspose, self).__init__(name)
        if min(in_channels, out_channels, kernel_size, stride) < 1:
            raise InvalidInputError('transposed conv dimensions must be '
                                    'positive')
        if padding == SAME and kernel_size < stride:
            raise InvalidInputError("'same' needs kernel_size >= stride")
        if padding not in (SAME, VALID):
            raise InvalidInputError('unknown padding {0!r}'.format(padding))
        k = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = k
        self.stride = stride
        self.padding = padding
        self.kernel = Tensor(
            he_uniform((k, k, in_channels, out_channels), in_channels,
                       _rng(rng), dtype), 'kernel')
        self.bias = Tensor(np.zeros(out_channels, dtype), 'bias') \
            if use_bias else None

    def parameters(self):
        """Return kernel and bias."""
        return [p for p in (self.kernel, self.bias) if p is not None]

    def _crop(self, h, w):
        k, s = self.kernel_size, self.stride
        full_h, full_w = (h - 1) * s + k, (w - 1) * s + k
        if self.padding == VALID:
            return full_h, full_w, (0, full_h), (0, full_w)
        top = (k - s) // 2
        left = (k - s) // 2
        return full_h, full_w, (top, top + h * s), (left, left + w * s)

    def forward(self, x):
        """Upsample ``x``."""
        self._check_rank(x, 4)
        self._check_channels(x, self.in_channels)
        b, h, w, _ = x.shape
        k, s = self.kernel_size, self.stride
        W = self.kernel.values
        full_h, full_w, rows, cols = self._crop(h, w)
        full = np.zeros((b, full_h, full_w, self.out_channels),
                        dtype=np.result_type(x, W))
        for i in range(k):
            for j in range(k):
                full[:, i:i + s * h:s, j:j + s * w:s, :] += x.dot(W[i, j])
        y = full[:, rows[0]:rows[1], cols[0]:cols[1], :]
        if self.bias is not None:
            y = y + self.bias.values
        self._cache = (x, full.shape, rows, cols)
        return y

    def backward(self, grad):
        """Backpropagate through the transposed convolution."""
        x, full_shape, rows, cols = self._cache
        h, w = x.shape[1], x.shape[2]
        k, s = self.kernel_size, self.stride
        W = self.kernel.values
        if self.bias is not None:
            self.bias.accumulate(grad.sum(axis=(0, 1, 2)))
        dfull = np.zeros(full_shape, dtype=grad.dtype)
        dfull[:, rows[0]:rows[1], cols[0]:cols[1], :] = grad
        dx = np.zeros(x.shape, dtype=grad.dtype)
        dW = np.zeros_like(W)
        flat_x = x.reshape(-1, self.in_channels)
        for i in range(k):
            for j in range(k):
                patch = dfull[:, i:i + s * h:s, j:j + s * w:s, :]
                dx += patch.dot(W[i, j].T)
                dW[i, j] = flat_x.T.dot(patch.reshape(-1, self.out_channels))
        self.kernel.accumulate(dW)
        return dx

    def output_shape(self, input_shape):
        """Return (out_h, out_w, out_channels)."""
        _, _, rows, cols = self._crop(input_shape[0], input_shape[1])
        return (rows[1] - rows[0], cols[1] - cols[0], self.out_channels)

    def macs(self, input_shape):
        """Return in_h * in_w * in_c * k * k * out_c."""
        return input_shape[0] * input_shape[1] * self.in_channels * \
            self.kernel_size ** 2 * self.out_channels


class MaxPool2D(Layer):
    """Non-overlapping max pooling; ragged edges are padded with -inf."""

    def __init__(self, pool_size=2, name=None):
        """Pool over ``pool_size`` x ``pool_size`` windows."""
        super(MaxPool2D, self).__init__(name)
        self.pool_size = pool_size

    def forward(self, x):
        """Take the window maxima."""
        self._check_rank(x, 4)
        p = self.pool_size
        b, h, w, c = x.shape
        oh, ow = -(-h // p), -(-w // p)
        xp = np.pad(x, ((0, 0), (0, oh * p - h), (0, ow * p - w), (0, 0)),
                    constant_values=-np.inf)
        windows = xp.reshape(b, oh, p, ow, p, c).transpose(0, 1, 3, 5, 2, 4)
        windows = windows.reshape(b, oh, ow, c, p * p)
        arg = np.argmax(windows, axis=-1)
        self._cache = (x.shape, arg)
        return np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        """Route the gradient to the arg-max of each window."""
        (b, h, w, c), arg = self._cache
        p = self.pool_size
        oh, ow = arg.shape[1], arg.shape[2]
        dwin = np.zeros((b, oh, ow, c, p * p), dtype=grad.dtype)
        np.put_along_axis(dwin, arg[..., None], grad[..., None], axis=-1)
        dxp = dwin.reshape(b, oh, ow, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        dxp = dxp.reshape(b, oh * p, ow * p, c)
        return dxp[:, :h, :w, :]

    def output_shape(self, input_shape):
        """Return the pooled shape."""
        p = self.pool_size
        return (-(-input_shape[0] // p), -(-input_shape[1] // p),
                input_shape[2])


class Dense(Layer):
    """Fully connected layer, weights stored as (in, out)."""

    def __init__(self, in_features, out_features, use_bias=True, rng=None,
                 dtype=TRAIN_DTYPE, name=None):
        """Create the layer with fan-in uniform weights and zero bias."""
        super(Dense, self).__init__(name)
        if min(in_features, out_features) < 1:
            raise InvalidInputError('dense dimensions must be positive')
        self.in_features = in_features
        self.out_features = out_features
        self.kernel = Tensor(he_uniform((in_features, out_features),
                                        in_features, _rng(rng), dtype),
                             'kernel')
        self.bias = Tensor(np.zeros(out_features, dtype), 'bias') \
            if use_bias else None

    def parameters(self):
        """Return kernel and bias."""
        return [p for p in (self.kernel, self.bias) if p is not None]

    def forward(self, x):
        """Return ``x @ W + b``."""
        self._check_rank(x, 2)
        self._check_channels(x, self.in_features)
        self._cache = x
        y = x.dot(self.kernel.values)
        if self.bias is not None:
            y = y + self.bias.values
        return y

    def backward(self, grad):
        """Backpropagate through the affine map."""
        x = self._cache
        self.kernel.accumulate(x.T.dot(grad))
        if self.bias is not None:
            self.bias.accumulate(grad.sum(axis=0))
        return grad.dot(self.kernel.values.T)

    def output_shape(self, input_shape):
        """Return (out_features,)."""
        return (self.out_features,)

    def macs(self, input_shape):
        """Return in * out."""
        return self.in_features * self.out_features


class ReLU(Layer):
    """Rectified linear unit."""

    def forward(self, x):
        """Return max(x, 0)."""
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad):
        """Pass gradients where the input was positive."""
        return grad * self._cache


class Sigmoid(Layer):
    """Logistic output, used for image reconstruction."""

    def forward(self, x):
        """Return 1 / (1 + exp(-x))."""
        y = expit(x)
        self._cache = y
        return y

    def backward(self, grad):
        """Multiply by y * (1 - y)."""
        y = self._cache
        return grad * y * (1.0 - y)


class GlobalAveragePool2D(Layer):
    """Average over the spatial axes, (b, h, w, c) -> (b, c)."""

    def forward(self, x):
        """Return the spatial mean."""
        self._check_rank(x, 4)
        self._cache = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        """Spread the gradient evenly over the spatial positions."""
        b, h, w, c = self._cache
        return np.broadcast_to(grad[:, None, None, :] / (h * w),
                               (b, h, w, c)).copy()

    def output_shape(self, input_shape):
        """Return (channels,)."""
        return (input_shape[-1],)


class Reshape(Layer):
    """Reshape each sample to ``target_shape``."""

    def __init__(self, target_shape, name=None):
        """Store the per-sample target shape."""
        super(Reshape, self).__init__(name)
        self.target_shape = tuple(target_shape)

    def forward(self, x):
        """Reshape, keeping the batch axis."""
        if int(np.prod(x.shape[1:])) != int(np.prod(self.target_shape)):
            raise ShapeError('cannot reshape', self.target_shape,
                             x.shape[1:])
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.target_shape)

    def backward(self, grad):
        """Restore the input shape."""
        return grad.reshape(self._cache)

    def output_shape(self, input_shape):
        """Return the target shape."""
        return self.target_shape


class Flatten(Layer):
    """Flatten each sample to a vector."""

    def forward(self, x):
        """Return (batch, features)."""
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        """Restore the input shape."""
        return grad.reshape(self._cache)

    def output_shape(self, input_shape):
        """Return (prod(input_shape),)."""
        return (int(np.prod(input_shape)),)


class Sequential(Layer):
    """A chain of layers."""

    def __init__(self, layers, name=None):
        """Chain ``layers`` in order."""
        super(Sequential, self).__init__(name)
        self.layers = list(layers)

    def parameters(self):
        """Return the parameters of every child in order."""
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self, prefix=''):
        """Qualify child parameters with their position."""
        named = []
        for i, layer in enumerate(self.layers):
            named.extend(layer.named_parameters('%s%d.' % (prefix, i)))
        return named

    def forward(self, x):
        """Run every layer."""
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        """Backpropagate through every layer in reverse."""
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def output_shape(self, input_shape):
        """Chain the output shapes."""
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def macs(self, input_shape):
        """Sum child MACs along the chain."""
        total = 0
        shape = tuple(input_shape)
        for layer in self.layers:
            total += layer.macs(shape)
            shape = layer.output_shape(shape)
        return total

    def __len__(self):
        """Return the number of layers."""
        return len(self.layers)

    def __getitem__(self, index):
        """Return a child layer."""
        return self.layers[index]


def _unpad(x, pads):
    (_, _), (pt, pb), (pl, pr), (_, _) = pads
    return x[:, pt:x.shape[1] - pb, pl:x.shape[2] - pr, :]


def conv2d_reference(x, kernel, bias, stride=1, padding=SAME):
    """Loop-based convolution, the expected output of :class:`Conv2D`."""
    k = kernel.shape[0]
    b, h, w, cin = x.shape
    cout = kernel.shape[3]
    oh, pt, pb = conv_output_size(h, k, stride, padding)
    ow, pl, pr = conv_output_size(w, k, stride, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    y = np.zeros((b, oh, ow, cout), dtype=np.result_type(x, kernel))
    for n in range(b):
        for r in range(oh):
            for c in range(ow):
                window = xp[n, r * stride:r * stride + k,
                            c * stride:c * stride + k, :]
                for o in range(cout):
                    y[n, r, c, o] = np.sum(window * kernel[:, :, :, o])
    if bias is not None:
        y += bias
    return y


def depthwise_reference(x, kernel, bias, stride=1, padding=SAME):
    """Loop-based reference output of :class:`DepthwiseConv2D`."""
    k = kernel.shape[0]
    b, h, w, ch = x.shape
    oh, pt, pb = conv_output_size(h, k, stride, padding)
    ow, pl, pr = conv_output_size(w, k, stride, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    y = np.zeros((b, oh, ow, ch), dtype=np.result_type(x, kernel))
    for n in range(b):
        for r in range(oh):
            for c in range(ow):
                window = xp[n, r * stride:r * stride + k,
                            c * stride:c * stride + k, :]
                y[n, r, c, :] = np.sum(window * kernel, axis=(0, 1))
    if bias is not None:
        y += bias
    return y
