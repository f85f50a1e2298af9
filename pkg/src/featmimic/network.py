"""Small feed-forward networks with exact reverse-mode input gradients.

The model family is deliberately narrow: dense, conv2d (zero padding,
unit dilation), relu, maxpool2d, flatten and a final softmax, all in
float32, one example per call.  Preprocessing (per-channel mean
subtraction) happens inside ``forward``, so attacks and callers always
deal in raw pixel values.

Activations can be read at a *tap*: a layer name plus a phase.  Phase
``pre_activation`` is the named layer's own output and is only legal when
a relu follows; ``post_activation`` is the value after that relu (or the
layer's own output when nothing elementwise follows).
"""

from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np

from featmimic import kernels


class NonFiniteError(FloatingPointError):
    """A network evaluation produced NaN or infinity."""


def _frozen_f32(a, name):
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float32))
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dense:
    kind: ClassVar[str] = "dense"
    name: str
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _frozen_f32(self.weight, f"{self.name}.weight")
        b = _frozen_f32(self.bias, f"{self.name}.bias")
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError(f"{self.name}: weight must be (out, in), bias (out,)")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class Conv2d:
    kind: ClassVar[str] = "conv2d"
    name: str
    kernel: np.ndarray
    bias: np.ndarray
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)

    def __post_init__(self):
        k = _frozen_f32(self.kernel, f"{self.name}.kernel")
        b = _frozen_f32(self.bias, f"{self.name}.bias")
        if k.ndim != 4 or b.ndim != 1 or b.shape[0] != k.shape[0]:
            raise ValueError(
                f"{self.name}: kernel must be (out_c, in_c, kh, kw), bias (out_c,)"
            )
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        object.__setattr__(self, "padding", tuple(int(p) for p in self.padding))
        if len(self.stride) != 2 or min(self.stride) < 1:
            raise ValueError(f"{self.name}: stride must be two positive ints")
        if len(self.padding) != 2 or min(self.padding) < 0:
            raise ValueError(f"{self.name}: padding must be two non-negative ints")


@dataclass(frozen=True)
class Relu:
    kind: ClassVar[str] = "relu"
    name: str


@dataclass(frozen=True)
class MaxPool2d:
    kind: ClassVar[str] = "maxpool2d"
    name: str
    window: tuple
    stride: tuple

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(v) for v in self.window))
        object.__setattr__(self, "stride", tuple(int(v) for v in self.stride))
        if len(self.window) != 2 or min(self.window) < 1:
            raise ValueError(f"{self.name}: window must be two positive ints")
        if len(self.stride) != 2 or min(self.stride) < 1:
            raise ValueError(f"{self.name}: stride must be two positive ints")


@dataclass(frozen=True)
class Flatten:
    kind: ClassVar[str] = "flatten"
    name: str


@dataclass(frozen=True)
class Softmax:
    kind: ClassVar[str] = "softmax"
    name: str


Layer = Union[Dense, Conv2d, Relu, MaxPool2d, Flatten, Softmax]


@dataclass(frozen=True)
class Tap:
    """Read point for activations: layer name plus phase."""

    layer: str
    phase: str = "post_activation"

    def __post_init__(self):
        if self.phase not in ("pre_activation", "post_activation"):
            raise ValueError(f"unknown tap phase {self.phase!r}")


def _shape_after(layer, shape, index):
    where = f"layer {index} ({layer.name})"
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise ValueError(f"{where}: dense needs a flat input, got {shape}")
        if layer.weight.shape[1] != shape[0]:
            raise ValueError(
                f"{where}: weight expects {layer.weight.shape[1]} inputs, got {shape[0]}"
            )
        return (layer.weight.shape[0],)
    if isinstance(layer, Conv2d):
        if len(shape) != 3:
            raise ValueError(f"{where}: conv2d needs (channels, h, w), got {shape}")
        f, c, kh, kw = layer.kernel.shape
        if c != shape[0]:
            raise ValueError(f"{where}: kernel expects {c} channels, got {shape[0]}")
        sh, sw = layer.stride
        ph, pw = layer.padding
        ho = (shape[1] + 2 * ph - kh) // sh + 1
        wo = (shape[2] + 2 * pw - kw) // sw + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"{where}: kernel does not fit input {shape}")
        return (f, ho, wo)
    if isinstance(layer, MaxPool2d):
        if len(shape) != 3:
            raise ValueError(f"{where}: maxpool2d needs (channels, h, w), got {shape}")
        wh, ww = layer.window
        sh, sw = layer.stride
        if wh > shape[1] or ww > shape[2]:
            raise ValueError(f"{where}: window does not fit input {shape}")
        return (shape[0], (shape[1] - wh) // sh + 1, (shape[2] - ww) // sw + 1)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Softmax):
        if len(shape) != 1:
            raise ValueError(f"{where}: softmax needs a flat input, got {shape}")
        return shape
    if isinstance(layer, Relu):
        return shape
    raise ValueError(f"{where}: unsupported layer kind {type(layer).__name__}")


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable network description: layers, input geometry, pixel domain,
    per-channel preprocessing means and optional named taps.

    Instances are safe to share across threads and processes; all
    parameter arrays are marked read-only.
    """

    layers: tuple
    input_shape: tuple
    pixel_domain: tuple = (0.0, 255.0)
    channel_means: tuple = ()
    taps: dict = field(default_factory=dict)
    output_shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(
            self, "pixel_domain", tuple(float(v) for v in self.pixel_domain)
        )
        object.__setattr__(
            self, "channel_means", tuple(float(m) for m in self.channel_means)
        )
        object.__setattr__(self, "taps", dict(self.taps))
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if len(self.input_shape) not in (1, 3) or min(self.input_shape) < 1:
            raise ValueError(f"bad input shape {self.input_shape}")
        lo, hi = self.pixel_domain
        if not lo < hi:
            raise ValueError(f"bad pixel domain {self.pixel_domain}")
        if self.channel_means:
            if len(self.channel_means) != self.input_shape[0]:
                raise ValueError(
                    "channel_means must have one entry per input channel"
                )
            for m in self.channel_means:
                if not lo <= m <= hi:
                    raise ValueError(f"channel mean {m} outside pixel domain")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        shapes = []
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            if isinstance(layer, Softmax) and index != len(self.layers) - 1:
                raise ValueError("softmax is only allowed as the final layer")
            shape = _shape_after(layer, shape, index)
            shapes.append(shape)
        object.__setattr__(self, "output_shapes", tuple(shapes))
        for tap_name, tap in self.taps.items():
            _resolve_tap(self, tap)
            if not isinstance(tap_name, str) or not tap_name:
                raise ValueError("tap names must be non-empty strings")

    def layer_index(self, name):
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise ValueError(f"no layer named {name!r}")


def _resolve_tap(net, tap):
    """Map a tap to the effective layer index whose raw output it denotes."""
    i = net.layer_index(tap.layer)
    followed_by_relu = i + 1 < len(net.layers) and isinstance(net.layers[i + 1], Relu)
    if tap.phase == "pre_activation":
        if not followed_by_relu:
            raise ValueError(
                f"tap {tap.layer!r}: pre_activation needs a following relu"
            )
        return i
    return i + 1 if followed_by_relu else i


@dataclass(frozen=True)
class ActivationTrace:
    """Raw per-layer outputs of one forward pass, keyed by layer name."""

    spec: NetworkSpec
    outputs: dict
    final: np.ndarray

    def at(self, tap: Tap) -> np.ndarray:
        index = _resolve_tap(self.spec, tap)
        return self.outputs[self.spec.layers[index].name]


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float32)
    if x.shape != net.input_shape:
        raise ValueError(f"input shape {x.shape} != network input {net.input_shape}")
    lo, hi = net.pixel_domain
    if x.size and (x.min() < lo or x.max() > hi):
        raise ValueError(f"input values outside pixel domain [{lo}, {hi}]")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    return x


def _preprocess(net, x):
    if not net.channel_means:
        return x.copy()
    means = np.asarray(net.channel_means, dtype=np.float32)
    if len(net.input_shape) == 3:
        return x - means[:, None, None]
    return x - means


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _run_layer(layer, x):
    """Returns (output, aux) where aux is whatever backward needs."""
    if isinstance(layer, Dense):
        return kernels.dense_forward(layer.weight, layer.bias, x), None
    if isinstance(layer, Conv2d):
        sh, sw = layer.stride
        ph, pw = layer.padding
        return kernels.conv2d_forward(x, layer.kernel, layer.bias, sh, sw, ph, pw), None
    if isinstance(layer, Relu):
        return np.maximum(x, np.float32(0.0)), x
    if isinstance(layer, MaxPool2d):
        wh, ww = layer.window
        sh, sw = layer.stride
        y, idx = kernels.maxpool2d_forward(x, wh, ww, sh, sw)
        return y, idx
    if isinstance(layer, Flatten):
        return np.ascontiguousarray(x).reshape(-1), x.shape
    out = _softmax(x)
    return out, out


def _run_forward(net, x, stop_index):
    """Forward pass through layers [0, stop_index], collecting outputs and aux."""
    x = _check_input(net, x)
    current = _preprocess(net, x)
    outputs = []
    auxes = []
    for layer in net.layers[: stop_index + 1]:
        current, aux = _run_layer(layer, current)
        if not np.isfinite(current).all():
            raise NonFiniteError(f"non-finite values after layer {layer.name!r}")
        outputs.append(current)
        auxes.append(aux)
    return outputs, auxes


def forward(net: NetworkSpec, x) -> ActivationTrace:
    """Evaluate the network on one raw-pixel example.

    Args:
        net: network description.
        x: array matching ``net.input_shape`` with values inside
            ``net.pixel_domain``.

    Returns:
        ActivationTrace with one entry per layer.

    Raises:
        ValueError: shape or domain violations.
        NonFiniteError: NaN or infinity produced by any layer.
    """
    outputs, _ = _run_forward(net, x, len(net.layers) - 1)
    final = outputs[-1]
    if isinstance(net.layers[-1], Softmax) and abs(float(final.sum()) - 1.0) > 1e-5:
        raise NonFiniteError("softmax output does not sum to 1")
    named = {layer.name: out for layer, out in zip(net.layers, outputs)}
    return ActivationTrace(spec=net, outputs=named, final=final)


def features(net: NetworkSpec, x, tap: Tap) -> np.ndarray:
    """Flattened float32 activation vector at a tap."""
    index = _resolve_tap(net, tap)
    outputs, _ = _run_forward(net, x, index)
    return np.ascontiguousarray(outputs[index]).reshape(-1).copy()


def loss_euclidean(feats, target) -> float:
    """Half squared Euclidean distance between a feature vector and a target."""
    f = np.asarray(feats, dtype=np.float32).reshape(-1)
    t = np.asarray(target, dtype=np.float32).reshape(-1)
    if f.shape != t.shape:
        raise ValueError(f"feature/target length mismatch: {f.shape} vs {t.shape}")
    d = t.astype(np.float64) - f.astype(np.float64)
    return float(0.5 * np.dot(d, d))


def _backward_layer(layer, delta, aux, input_shape):
    if isinstance(layer, Dense):
        return kernels.dense_input_grad(layer.weight, delta)
    if isinstance(layer, Conv2d):
        sh, sw = layer.stride
        ph, pw = layer.padding
        c, h, w = input_shape
        return kernels.conv2d_input_grad(delta, layer.kernel, c, h, w, sh, sw, ph, pw)
    if isinstance(layer, Relu):
        # subgradient at exactly zero is zero
        return delta * (aux > 0)
    if isinstance(layer, MaxPool2d):
        c, h, w = input_shape
        return kernels.maxpool2d_input_grad(delta, aux, c, h, w)
    if isinstance(layer, Flatten):
        return delta.reshape(aux)
    s = aux
    return s * (delta - np.float32(np.dot(delta, s)))


def grad_input(net: NetworkSpec, x, tap: Tap, target) -> np.ndarray:
    """Gradient of ``0.5 * ||target - features(net, x, tap)||^2`` w.r.t. ``x``.

    Exact reverse-mode differentiation through the layers up to the tap.
    Relu uses subgradient 0 at 0; maxpool routes through the first maximal
    element of each window.  Mean subtraction has identity gradient, so
    the result lives in raw pixel units.

    Args:
        net: network description.
        x: raw-pixel input inside the pixel domain.
        tap: where features are read.
        target: vector of the tap's flattened length.

    Returns:
        float32 array shaped like ``x``.
    """
    index = _resolve_tap(net, tap)
    outputs, auxes = _run_forward(net, x, index)
    feats = outputs[index].reshape(-1)
    t = np.asarray(target, dtype=np.float32).reshape(-1)
    if t.shape != feats.shape:
        raise ValueError(f"target length {t.shape[0]} != tap length {feats.shape[0]}")
    delta = (feats - t).reshape(outputs[index].shape)
    for i in range(index, -1, -1):
        shape_in = net.input_shape if i == 0 else net.output_shapes[i - 1]
        delta = _backward_layer(net.layers[i], delta, auxes[i], shape_in)
    if not np.isfinite(delta).all():
        raise NonFiniteError("non-finite gradient")
    return delta.reshape(net.input_shape)


def classify(net: NetworkSpec, x) -> int:
    """Predicted class index; ties resolve to the lowest index."""
    if not isinstance(net.layers[-1], Softmax):
        raise ValueError("classify needs a softmax final layer")
    trace = forward(net, x)
    return int(np.argmax(trace.final))
