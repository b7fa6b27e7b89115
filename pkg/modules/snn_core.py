"""CUBA-LIF spiking networks.

Discrete dynamics per neuron:

    i[t] = alpha * i[t-1] + x[t]
    y[t] = beta * y[t-1] + (1 - beta) * i[t] - theta * s[t-1]
    s[t] = H(y[t] - theta),  H(0) = 1

Layers run layer-major: a layer turns its whole (batch, time, ...) input into
synaptic currents at once, then steps its neurons through time. Only the
recurrent layer couples its current to its own previous spikes. Every layer
also implements the backward pass through time used for training.
"""

import logging
from dataclasses import dataclass, asdict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from modules.exceptions import ConfigError, DataError
from modules.surrogate import spike, spike_grad
from modules.utils import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CubaParams:
    alpha: float = 0.75
    beta: float = 0.97
    theta: float = 1.25
    surrogate_slope: float = 3.0
    surrogate_width: float = 0.03

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ConfigError("alpha and beta must lie in [0, 1]", alpha=self.alpha, beta=self.beta)
        if self.theta <= 0:
            raise ConfigError("theta must be positive", theta=self.theta)
        if self.surrogate_slope <= 0 or self.surrogate_width <= 0:
            raise ConfigError("surrogate slope and width must be positive")

    @classmethod
    def from_decays(cls, current_decay=0.25, voltage_decay=0.03, **kwargs):
        """Decay d is read as retention 1 - d"""
        return cls(alpha=1.0 - current_decay, beta=1.0 - voltage_decay, **kwargs)

    def to_dict(self):
        return asdict(self)


@dataclass
class NeuronState:
    i: np.ndarray
    y: np.ndarray
    s_prev: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))


def cuba_step(state, x, params, relaxed=False):
    """Advance one timestep; returns the new state and the emitted spikes"""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != state.i.shape:
        raise DataError("input current does not match the neuron state",
                        expected=state.i.shape, got=x.shape)
    i = params.alpha * state.i + x
    y = params.beta * state.y + (1.0 - params.beta) * i - params.theta * state.s_prev
    s = spike(y, params, relaxed)
    return NeuronState(i, y, s), s


def run_neurons(currents, params, relaxed=False):
    """Step CUBA neurons over axis 1 of (batch, time, ...) currents"""
    state = NeuronState.zeros(currents[:, 0].shape)
    spikes = np.empty(currents.shape)
    voltages = np.empty(currents.shape)
    for t in range(currents.shape[1]):
        state, spikes[:, t] = cuba_step(state, currents[:, t], params, relaxed)
        voltages[:, t] = state.y
    return spikes, voltages


def neuron_backward(voltages, grad_spikes, params, relaxed=False, detach_reset=False, w_rec=None):
    """Gradient w.r.t. the synaptic currents, reverse time over axis 1.

    With w_rec, spikes at t also feed the current at t + 1 through the
    recurrent weights.
    """
    grad_x = np.zeros(voltages.shape)
    gy_next = np.zeros(voltages[:, 0].shape)
    gi_next = np.zeros(voltages[:, 0].shape)
    for t in reversed(range(voltages.shape[1])):
        gs = np.array(grad_spikes[:, t], dtype=np.float64)
        if not detach_reset:
            gs -= params.theta * gy_next
        if w_rec is not None:
            gs += gi_next @ w_rec
        gy = gs * spike_grad(voltages[:, t], params, relaxed) + params.beta * gy_next
        gi = (1.0 - params.beta) * gy + params.alpha * gi_next
        grad_x[:, t] = gi
        gy_next, gi_next = gy, gi
    return grad_x


def _check_last(array, size, what):
    if array.shape[-1] != size:
        raise DataError(f"{what} fan-in mismatch", expected=size, got=array.shape[-1])


def dense_forward(weights, spikes_in):
    """Currents W . s over the last axis"""
    weights = np.asarray(weights)
    spikes_in = np.asarray(spikes_in, dtype=np.float64)
    _check_last(spikes_in, weights.shape[1], "dense")
    return spikes_in @ weights.T


def recurrent_forward(w_in, w_rec, spikes_in, spikes_prev_self):
    """Feedforward drive plus the layer's own previous-step spikes"""
    return dense_forward(w_in, spikes_in) + dense_forward(w_rec, spikes_prev_self)


def _conv_windows(x, kernel, padding):
    x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    return sliding_window_view(x, (kernel, kernel), axis=(2, 3))


def conv_forward(kernels, spikes_in, padding=None):
    """Stride-1 2-D cross-correlation of (..., C_in, H, W) with (C_out, C_in, k, k)"""
    kernels = np.asarray(kernels)
    c_out, c_in, k, _ = kernels.shape
    padding = k // 2 if padding is None else padding
    spikes_in = np.asarray(spikes_in, dtype=np.float64)
    if spikes_in.ndim < 3 or spikes_in.shape[-3] != c_in:
        raise DataError("conv input channels mismatch", expected=c_in, got=spikes_in.shape)
    lead = spikes_in.shape[:-3]
    x = spikes_in.reshape((-1,) + spikes_in.shape[-3:])
    out = np.einsum("nchwij,ocij->nohw", _conv_windows(x, k, padding), kernels, optimize=True)
    return out.reshape(lead + out.shape[1:])


def conv_backward(kernels, spikes_in, grad_out, padding=None):
    """Gradients w.r.t. the conv input and kernels"""
    kernels = np.asarray(kernels)
    c_out, c_in, k, _ = kernels.shape
    padding = k // 2 if padding is None else padding
    x = np.asarray(spikes_in, dtype=np.float64).reshape((-1,) + spikes_in.shape[-3:])
    g = grad_out.reshape((-1,) + grad_out.shape[-3:])
    grad_k = np.einsum("nchwij,nohw->ocij", _conv_windows(x, k, padding), g, optimize=True)
    flipped = kernels[:, :, ::-1, ::-1]
    grad_in = np.einsum("nohwij,ocij->nchw", _conv_windows(g, k, k - 1 - padding), flipped, optimize=True)
    return grad_in.reshape(spikes_in.shape), grad_k


def sumpool_forward(spikes_in, stride=2):
    """Non-overlapping stride x stride block sums over the last two axes"""
    spikes_in = np.asarray(spikes_in, dtype=np.float64)
    h, w = spikes_in.shape[-2] // stride, spikes_in.shape[-1] // stride
    cropped = spikes_in[..., :h * stride, :w * stride]
    blocks = cropped.reshape(spikes_in.shape[:-2] + (h, stride, w, stride))
    return blocks.sum(axis=(-3, -1))


def sumpool_backward(grad_out, in_shape, stride=2):
    grad = np.repeat(np.repeat(grad_out, stride, axis=-2), stride, axis=-1)
    grad_in = np.zeros(in_shape)
    grad_in[..., :grad.shape[-2], :grad.shape[-1]] = grad
    return grad_in


class Layer:
    """A synaptic operation followed by a CUBA-LIF neuron stage"""

    kind = "layer"
    has_neurons = True

    def __init__(self, in_shape, out_shape, params=None):
        self.in_shape = tuple(int(v) for v in in_shape)
        self.out_shape = tuple(int(v) for v in out_shape)
        self.params = params if params is not None else CubaParams()
        self.weights = {}
        self.buffers = {}
        self.reference_norms = None

    # shapes and parameters

    def weight_shapes(self):
        return {}

    @property
    def fan_in(self):
        return int(np.prod(self.in_shape))

    @property
    def fan_out(self):
        return int(np.prod(self.out_shape))

    def parameter_count(self):
        return int(sum(np.prod(shape) for shape in self.weight_shapes().values()))

    def initialize(self, rng, gain=1.0):
        """Uniform weights in +-gain/sqrt(fan_in) of each weight's receiving neuron"""
        for name, shape in self.weight_shapes().items():
            fan_in = int(np.prod(shape[1:]))
            bound = gain / np.sqrt(fan_in)
            self.weights[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        self.reference_norms = None

    def normalize_weights(self):
        """Rescale every neuron's weight vector to its reference norm"""
        if not self.weights:
            return
        if self.reference_norms is None:
            self.reference_norms = {name: self._row_norms(w) for name, w in self.weights.items()}
        for name, w in self.weights.items():
            norms = self._row_norms(w)
            scale = np.where(norms > 0, self.reference_norms[name] / np.maximum(norms, 1e-12), 1.0)
            self.weights[name] = (w * scale.reshape((-1,) + (1,) * (w.ndim - 1))).astype(w.dtype)

    @staticmethod
    def _row_norms(w):
        return np.linalg.norm(np.asarray(w, dtype=np.float64).reshape(w.shape[0], -1), axis=1)

    def to_spec(self):
        return {"kind": self.kind, "in_shape": list(self.in_shape),
                "out_shape": list(self.out_shape), "params": self.params.to_dict()}

    # dynamics

    def synapse(self, inputs, cache):
        raise NotImplementedError

    def synapse_backward(self, grad_x, cache, need_input_grad=True):
        raise NotImplementedError

    def forward(self, inputs, relaxed=False, train=False, rng=None):
        cache = {"inputs": inputs, "relaxed": relaxed}
        currents = self.synapse(inputs, cache)
        spikes, voltages = run_neurons(currents, self.params, relaxed)
        cache["voltages"] = voltages
        return spikes, cache

    def backward(self, grad_spikes, cache, detach_reset=False, need_input_grad=True):
        grad_x = neuron_backward(cache["voltages"], grad_spikes, self.params,
                                 cache["relaxed"], detach_reset)
        return self.synapse_backward(grad_x, cache, need_input_grad)


class DenseLayer(Layer):
    """Fully connected synapses, optional input dropout and fixed integer delays"""

    kind = "dense"

    def __init__(self, n_in, n_out, params=None, dropout=0.0, max_delay=0):
        super().__init__((n_in,), (n_out,), params)
        if not 0.0 <= dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)", dropout=dropout)
        self.dropout = float(dropout)
        self.max_delay = int(max_delay)

    def weight_shapes(self):
        return {"w": (self.out_shape[0], self.in_shape[0])}

    def initialize(self, rng, gain=1.0):
        super().initialize(rng, gain)
        if self.max_delay > 0:
            shape = self.weight_shapes()["w"]
            self.buffers["delays"] = rng.integers(0, self.max_delay + 1, size=shape).astype(np.float32)

    def _delay_masks(self):
        delays = self.buffers.get("delays")
        if delays is None:
            return None
        return [(d, (delays == d)) for d in np.unique(delays.astype(np.int64))]

    def synapse(self, inputs, cache):
        _check_last(inputs, self.in_shape[0], "dense")
        if self.dropout > 0 and cache.get("train") and cache.get("rng") is not None:
            keep = cache["rng"].random(inputs.shape) >= self.dropout
            cache["mask"] = keep / (1.0 - self.dropout)
            inputs = inputs * cache["mask"]
            cache["inputs"] = inputs
        w = self.weights["w"]
        masks = self._delay_masks()
        if masks is None:
            return inputs @ w.T
        currents = np.zeros(inputs.shape[:2] + self.out_shape)
        for d, mask in masks:
            shifted = inputs if d == 0 else np.concatenate(
                [np.zeros_like(inputs[:, :d]), inputs[:, :-d]], axis=1)[:, :inputs.shape[1]]
            currents += shifted @ (w * mask).T
        return currents

    def synapse_backward(self, grad_x, cache, need_input_grad=True):
        inputs = cache["inputs"]
        w = self.weights["w"]
        n_out, n_in = w.shape
        masks = self._delay_masks()
        flat_g = grad_x.reshape(-1, n_out)
        if masks is None:
            grad_w = flat_g.T @ inputs.reshape(-1, n_in)
            grad_in = grad_x @ w if need_input_grad else None
        else:
            steps = inputs.shape[1]
            grad_w = np.zeros((n_out, n_in))
            grad_in = np.zeros(inputs.shape) if need_input_grad else None
            for d, mask in masks:
                if d >= steps:
                    continue
                shifted = inputs if d == 0 else np.concatenate(
                    [np.zeros_like(inputs[:, :d]), inputs[:, :-d]], axis=1)
                grad_w += (flat_g.T @ shifted.reshape(-1, n_in)) * mask
                if need_input_grad:
                    grad_in[:, :steps - d] += grad_x[:, d:] @ (w * mask)
        if need_input_grad and "mask" in cache:
            grad_in = grad_in * cache["mask"]
        return grad_in, {"w": grad_w}

    def forward(self, inputs, relaxed=False, train=False, rng=None):
        cache = {"inputs": inputs, "relaxed": relaxed, "train": train, "rng": rng}
        currents = self.synapse(inputs, cache)
        spikes, voltages = run_neurons(currents, self.params, relaxed)
        cache["voltages"] = voltages
        return spikes, cache

    def to_spec(self):
        spec = super().to_spec()
        spec.update({"dropout": self.dropout, "max_delay": self.max_delay})
        return spec


class RecurrentLayer(Layer):
    """Dense drive plus all-to-all weights from the layer's own previous spikes"""

    kind = "recurrent"

    def __init__(self, n_in, n_out, params=None):
        super().__init__((n_in,), (n_out,), params)

    def weight_shapes(self):
        n_in, n_out = self.in_shape[0], self.out_shape[0]
        return {"w_in": (n_out, n_in), "w_rec": (n_out, n_out)}

    @property
    def fan_in(self):
        return self.in_shape[0] + self.out_shape[0]

    def forward(self, inputs, relaxed=False, train=False, rng=None):
        _check_last(inputs, self.in_shape[0], "recurrent")
        drive = dense_forward(self.weights["w_in"], inputs)
        w_rec = self.weights["w_rec"]
        state = NeuronState.zeros(drive[:, 0].shape)
        spikes = np.empty(drive.shape)
        voltages = np.empty(drive.shape)
        for t in range(drive.shape[1]):
            current = drive[:, t] + dense_forward(w_rec, state.s_prev)
            state, spikes[:, t] = cuba_step(state, current, self.params, relaxed)
            voltages[:, t] = state.y
        cache = {"inputs": inputs, "relaxed": relaxed, "voltages": voltages, "spikes": spikes}
        return spikes, cache

    def backward(self, grad_spikes, cache, detach_reset=False, need_input_grad=True):
        w_in, w_rec = self.weights["w_in"], self.weights["w_rec"]
        grad_x = neuron_backward(cache["voltages"], grad_spikes, self.params, cache["relaxed"],
                                 detach_reset, w_rec=np.asarray(w_rec, dtype=np.float64))
        n_out = self.out_shape[0]
        flat_g = grad_x.reshape(-1, n_out)
        grad_w_in = flat_g.T @ cache["inputs"].reshape(-1, self.in_shape[0])
        spikes = cache["spikes"]
        grad_w_rec = grad_x[:, 1:].reshape(-1, n_out).T @ spikes[:, :-1].reshape(-1, n_out)
        grad_in = grad_x @ w_in if need_input_grad else None
        return grad_in, {"w_in": grad_w_in, "w_rec": grad_w_rec}


class Conv2dLayer(Layer):
    """Same-padded stride-1 convolution, no bias"""

    kind = "conv2d"

    def __init__(self, in_shape, c_out, kernel=5, params=None):
        c_in, h, w = in_shape
        if h < kernel or w < kernel:
            raise ConfigError("spatial dims smaller than the conv kernel",
                              height=h, width=w, kernel=kernel)
        super().__init__(in_shape, (c_out, h, w), params)
        self.kernel = int(kernel)
        self.padding = self.kernel // 2

    def weight_shapes(self):
        return {"w": (self.out_shape[0], self.in_shape[0], self.kernel, self.kernel)}

    @property
    def synapses_per_input(self):
        return self.out_shape[0] * self.kernel * self.kernel

    def synapse(self, inputs, cache):
        if tuple(inputs.shape[2:]) != self.in_shape:
            raise DataError("conv input shape mismatch", expected=self.in_shape, got=inputs.shape[2:])
        return conv_forward(self.weights["w"], inputs, self.padding)

    def synapse_backward(self, grad_x, cache, need_input_grad=True):
        grad_in, grad_w = conv_backward(self.weights["w"], cache["inputs"], grad_x, self.padding)
        return (grad_in if need_input_grad else None), {"w": grad_w}

    def to_spec(self):
        spec = super().to_spec()
        spec["kernel"] = self.kernel
        return spec


class SumPoolLayer(Layer):
    """2x2 block sums feeding CUBA neurons; no parameters"""

    kind = "sumpool"

    def __init__(self, in_shape, stride=2, params=None):
        c, h, w = in_shape
        super().__init__(in_shape, (c, h // stride, w // stride), params)
        self.stride = int(stride)

    @property
    def synapses_per_input(self):
        return 1

    def synapse(self, inputs, cache):
        if tuple(inputs.shape[2:]) != self.in_shape:
            raise DataError("pool input shape mismatch", expected=self.in_shape, got=inputs.shape[2:])
        return sumpool_forward(inputs, self.stride)

    def synapse_backward(self, grad_x, cache, need_input_grad=True):
        if not need_input_grad:
            return None, {}
        return sumpool_backward(grad_x, cache["inputs"].shape, self.stride), {}

    def to_spec(self):
        spec = super().to_spec()
        spec["stride"] = self.stride
        return spec


class FlattenLayer(Layer):
    """Reshape only; no neurons"""

    kind = "flatten"
    has_neurons = False

    def __init__(self, in_shape, params=None):
        super().__init__(in_shape, (int(np.prod(in_shape)),), params)

    def forward(self, inputs, relaxed=False, train=False, rng=None):
        return inputs.reshape(inputs.shape[:2] + self.out_shape), {"shape": inputs.shape}

    def backward(self, grad_spikes, cache, detach_reset=False, need_input_grad=True):
        if not need_input_grad:
            return None, {}
        return grad_spikes.reshape(cache["shape"]), {}


def layer_from_spec(spec):
    """Rebuild a layer from its to_spec() dictionary"""
    try:
        kind = spec["kind"]
        params = CubaParams(**spec["params"])
        in_shape = tuple(spec["in_shape"])
        if kind == "dense":
            return DenseLayer(in_shape[0], spec["out_shape"][0], params,
                              spec.get("dropout", 0.0), spec.get("max_delay", 0))
        if kind == "recurrent":
            return RecurrentLayer(in_shape[0], spec["out_shape"][0], params)
        if kind == "conv2d":
            return Conv2dLayer(in_shape, spec["out_shape"][0], spec.get("kernel", 5), params)
        if kind == "sumpool":
            return SumPoolLayer(in_shape, spec.get("stride", 2), params)
        if kind == "flatten":
            return FlattenLayer(in_shape, params)
    except (KeyError, TypeError) as e:
        raise DataError(f"Malformed layer spec: {e}", spec=spec)
    raise DataError(f"Unknown layer kind {kind!r}")


class SnnModel:
    """Ordered CUBA-LIF layer stack with per-layer spike statistics"""

    def __init__(self, layers, input_shape, num_classes=2, timesteps=None, name="custom"):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.num_classes = int(num_classes)
        self.timesteps = timesteps
        self.name = name

        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            if layer.in_shape != shape:
                raise ConfigError("adjacent layer shapes do not compose",
                                  layer=index, expected=shape, got=layer.in_shape)
            shape = layer.out_shape
        if shape != (self.num_classes,):
            raise ConfigError("output layer must have one neuron per class",
                              output_shape=shape, num_classes=self.num_classes)
        self.reset_stats()

    # parameters

    def initialize(self, seed, gain=1.0):
        rng = make_rng(seed, 4)
        for layer in self.layers:
            layer.initialize(rng, gain)
        return self

    @property
    def is_initialized(self):
        return all(set(layer.weights) == set(layer.weight_shapes()) for layer in self.layers)

    def parameters(self):
        return {
            f"layer{index}.{name}": weights
            for index, layer in enumerate(self.layers)
            for name, weights in layer.weights.items()
        }

    def set_parameter(self, key, value):
        index, name = key.split(".", 1)
        self.layers[int(index[len("layer"):])].weights[name] = value

    def parameter_count(self):
        return sum(layer.parameter_count() for layer in self.layers)

    def normalize_weights(self):
        for layer in self.layers:
            layer.normalize_weights()

    def to_spec(self):
        return {"name": self.name, "input_shape": list(self.input_shape),
                "num_classes": self.num_classes, "timesteps": self.timesteps,
                "layers": [layer.to_spec() for layer in self.layers]}

    @classmethod
    def from_spec(cls, spec):
        try:
            return cls([layer_from_spec(s) for s in spec["layers"]], spec["input_shape"],
                       spec.get("num_classes", 2), spec.get("timesteps"), spec.get("name", "custom"))
        except KeyError as e:
            raise DataError(f"Malformed model spec: missing {e}")

    # statistics

    def reset_stats(self):
        self.stats = {"sample_steps": 0, "input": 0.0, "layers": [0.0] * len(self.layers)}
        self.last_counts = []

    def record(self, sample_steps, input_total, layer_totals):
        """Accumulate spike totals over sample_steps (samples x timesteps)"""
        self.stats["sample_steps"] += int(sample_steps)
        self.stats["input"] += float(input_total)
        for index, total in enumerate(layer_totals):
            self.stats["layers"][index] += float(total)

    def has_stats(self):
        return self.stats["sample_steps"] > 0

    def mean_events(self):
        """Mean spikes per timestep per sample: the input and every layer's output"""
        if not self.has_stats():
            raise DataError("no spike statistics recorded; run a forward pass first")
        steps = self.stats["sample_steps"]
        return {"input": self.stats["input"] / steps,
                "layers": [total / steps for total in self.stats["layers"]]}

    # dynamics

    def run(self, inputs, train=False, relaxed=False, rng=None, record=True):
        """Forward a (batch, time, *input_shape) array; returns output spikes and caches"""
        inputs = np.asarray(inputs, dtype=np.float64)
        if tuple(inputs.shape[2:]) != self.input_shape:
            raise DataError("input geometry does not match the model",
                            expected=self.input_shape, got=inputs.shape[2:])
        if not self.is_initialized:
            raise ConfigError("model weights are not initialized")
        caches = []
        x = inputs
        for layer in self.layers:
            x, cache = layer.forward(x, relaxed=relaxed, train=train, rng=rng)
            cache["out_count"] = float(x.sum())
            caches.append(cache)
        self.last_counts = [cache["out_count"] for cache in caches]
        if record:
            self.record(inputs.shape[0] * inputs.shape[1], inputs.sum(), self.last_counts)
        return x, caches

    def backward(self, grad_out, caches, detach_reset=False):
        """Parameter gradients given dL/d(output spikes)"""
        grads = {}
        grad = grad_out
        for index in reversed(range(len(self.layers))):
            layer = self.layers[index]
            grad, layer_grads = layer.backward(grad, caches[index], detach_reset,
                                               need_input_grad=index > 0)
            for name, value in layer_grads.items():
                grads[f"layer{index}.{name}"] = value
        return grads


def forward(model, tensor):
    """Run one SpikeTensor from fresh state.

    Returns the output spike trains (C, T) and the per-layer spike counts of
    this sample; the model's running statistics are updated as well.
    """
    inputs = tensor.as_input()[None]
    out, _ = model.run(inputs)
    return out[0].T, list(model.last_counts)


def predict(output_trains):
    """Class with the most output spikes; ties go to the lower index"""
    counts = np.asarray(output_trains).sum(axis=-1)
    return int(np.argmax(counts))


def build_dense_snn(height, width, hidden=(512, 512), num_classes=2, params=None,
                    seed=None, init_gain=1.0, dropout=0.0, max_delay=0):
    """flatten(2*H*W) -> dense hidden... -> dense num_classes"""
    params = params or CubaParams()
    layers = [FlattenLayer((2, height, width), params)]
    n_in = 2 * height * width
    for n_out in hidden:
        layers.append(DenseLayer(n_in, n_out, params, dropout, max_delay))
        n_in = n_out
    layers.append(DenseLayer(n_in, num_classes, params))
    model = SnnModel(layers, (2, height, width), num_classes, name="dense")
    if seed is not None:
        model.initialize(seed, init_gain)
    return model


def build_conv_snn(height, width, channels=(8, 8, 2), kernel=5, dense=512, recurrent=256,
                   num_classes=2, params=None, seed=None, init_gain=1.0, dropout=0.05, max_delay=0):
    """Pool/conv stages, then flatten -> dense -> recurrent -> dense num_classes"""
    params = params or CubaParams()
    layers = []
    shape = (2, height, width)
    for c_out in channels:
        pool = SumPoolLayer(shape, 2, params)
        conv = Conv2dLayer(pool.out_shape, c_out, kernel, params)
        layers.extend([pool, conv])
        shape = conv.out_shape
    flatten = FlattenLayer(shape, params)
    layers.append(flatten)
    n_flat = flatten.out_shape[0]
    layers.append(DenseLayer(n_flat, dense, params, dropout, max_delay))
    layers.append(RecurrentLayer(dense, recurrent, params))
    layers.append(DenseLayer(recurrent, num_classes, params, dropout, max_delay))
    model = SnnModel(layers, (2, height, width), num_classes, name="conv")
    if seed is not None:
        model.initialize(seed, init_gain)
    return model
