"""Layer catalog and the differentiable execution engine.

A Network is an ordered DAG of LayerSpecs over named inputs. Parameters
live in a flat dict keyed by hierarchical dotted paths
("branch2.res1.conv1.w"). forward returns the output plus a cache that
backward consumes to produce gradients for every parameter path and for
the graph inputs.

Composite kinds (dense_block, res_block, spp, upsample_conv) are executed
in terms of the primitives in ops.py, with their chain rules written out
by hand; every kind is covered by finite-difference checks in the tests.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError, ConfigError, ShapeError
from . import ops

KINDS = (
    "conv",
    "relu",
    "tanh",
    "softmax2",
    "dense_block",
    "res_block",
    "downsample",
    "upsample_conv",
    "pointwise_conv",
    "spp",
    "concat",
)


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LayerSpec:
    """One node of the graph; hyperparameters are kind-specific.

    kernel: conv-like kinds and the convs inside blocks (must be odd).
    factor: downsample / upsample_conv scale (power of 2).
    factors: spp pooling factors.
    depth/growth: dense_block layer count and per-layer output channels.
    reduce_channels: spp per-scale pointwise output width.
    to_unit: tanh only; remap (-1,1) to (0,1).
    """

    name: str
    kind: str
    inputs: tuple
    out_channels: int = 0
    kernel: int = 3
    stride: int = 1
    factor: int = 2
    factors: tuple = ()
    depth: int = 3
    growth: int = 8
    reduce_channels: int = 0
    to_unit: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if not self.inputs:
            raise ConfigError(f"layer {self.name!r} has no inputs")
        if self.kind in ("conv", "dense_block", "res_block") and self.kernel % 2 == 0:
            raise ConfigError(f"layer {self.name!r}: kernel size must be odd, got {self.kernel}")
        if self.kind == "conv" and self.stride < 1:
            raise ConfigError(f"layer {self.name!r}: stride must be >= 1")
        if self.kind in ("downsample", "upsample_conv") and not _is_pow2(self.factor):
            raise ConfigError(f"layer {self.name!r}: scale factor must be a power of 2, got {self.factor}")
        if self.kind == "spp" and not all(_is_pow2(f) for f in self.factors):
            raise ConfigError(f"layer {self.name!r}: spp factors must be powers of 2, got {self.factors}")
        if self.kind == "dense_block" and self.depth < 1:
            raise ConfigError(f"layer {self.name!r}: dense_block depth must be >= 1")
        if self.kind == "concat" and len(self.inputs) < 2:
            raise ConfigError(f"layer {self.name!r}: concat needs at least 2 inputs")

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "inputs": list(self.inputs)}
        for f_ in ("out_channels", "kernel", "stride", "factor", "depth", "growth", "reduce_channels"):
            d[f_] = getattr(self, f_)
        d["factors"] = list(self.factors)
        d["to_unit"] = self.to_unit
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["inputs"] = tuple(d["inputs"])
        d["factors"] = tuple(d.get("factors", ()))
        return cls(**d)


class Network:
    """Ordered DAG of LayerSpecs with named parameter arrays.

    Channel counts are inferred at construction; parameter shapes are
    fixed then, arrays are filled by init_params.
    """

    def __init__(self, name, input_channels, layers, output, dtype=np.float64):
        self.name = name
        self.input_channels = dict(input_channels)
        self.layers = list(layers)
        self.output = output
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.param_shapes = {}
        self.channels = {}
        self.max_factor = 1
        self._version = 0
        self._infer()

    def _infer(self):
        known = dict(self.input_channels)
        names = set(known)
        for spec in self.layers:
            if spec.name in names:
                raise ConfigError(f"{self.name}: duplicate node name {spec.name!r}")
            for inp in spec.inputs:
                if inp not in names:
                    raise ConfigError(f"{self.name}/{spec.name}: unknown input {inp!r}")
            cins = [known[i] for i in spec.inputs]
            known[spec.name] = self._declare(spec, cins)
            names.add(spec.name)
        if self.output not in known:
            raise ConfigError(f"{self.name}: output node {self.output!r} does not exist")
        self.channels = known

    def _add_param(self, path, shape):
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else 0
        if len(shape) > 1 and fan_in == 0:
            raise ConfigError(f"{self.name}/{path}: zero fan-in parameter")
        if len(shape) > 1 and shape[-1] == 0:
            raise ConfigError(f"{self.name}/{path}: zero output channels")
        self.param_shapes[path] = tuple(shape)

    def _declare(self, spec, cins):
        kind = spec.kind
        if kind in ("conv", "pointwise_conv", "upsample_conv"):
            (cin,) = cins
            k = 1 if kind == "pointwise_conv" else (spec.kernel if kind == "conv" else 3)
            self._add_param(f"{spec.name}.w", (k, k, cin, spec.out_channels))
            self._add_param(f"{spec.name}.b", (spec.out_channels,))
            if kind == "upsample_conv":
                self.max_factor = max(self.max_factor, spec.factor)
            return spec.out_channels
        if kind in ("relu", "tanh"):
            (cin,) = cins
            return cin
        if kind == "softmax2":
            (cin,) = cins
            if cin != 2:
                raise ConfigError(f"{self.name}/{spec.name}: softmax2 needs 2 channels, got {cin}")
            return 2
        if kind == "downsample":
            (cin,) = cins
            self.max_factor = max(self.max_factor, spec.factor)
            return cin
        if kind == "res_block":
            (cin,) = cins
            for conv in ("conv1", "conv2"):
                self._add_param(f"{spec.name}.{conv}.w", (spec.kernel, spec.kernel, cin, cin))
                self._add_param(f"{spec.name}.{conv}.b", (cin,))
            return cin
        if kind == "dense_block":
            (cin,) = cins
            for j in range(spec.depth):
                cj = cin + j * spec.growth
                self._add_param(f"{spec.name}.layer{j}.w", (spec.kernel, spec.kernel, cj, spec.growth))
                self._add_param(f"{spec.name}.layer{j}.b", (spec.growth,))
            return cin + spec.depth * spec.growth
        if kind == "spp":
            (cin,) = cins
            for f_ in spec.factors:
                self._add_param(f"{spec.name}.scale{f_}.w", (1, 1, cin, spec.reduce_channels))
                self._add_param(f"{spec.name}.scale{f_}.b", (spec.reduce_channels,))
                self.max_factor = max(self.max_factor, f_)
            return len(spec.factors) * spec.reduce_channels
        if kind == "concat":
            return sum(cins)
        raise ConfigError(f"unhandled kind {kind}")  # unreachable

    def param_count(self):
        return sum(int(np.prod(s)) for s in self.param_shapes.values())


def init_params(net, seed):
    """Fill parameters deterministically: fan-in-scaled normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for path, shape in net.param_shapes.items():
        if len(shape) == 1:
            params[path] = np.zeros(shape, dtype=net.dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            std = np.sqrt(2.0 / fan_in)
            params[path] = (rng.standard_normal(shape) * std).astype(net.dtype)
    net.params = params
    net._version += 1
    return net


def forward(net, inputs):
    """Run the graph. inputs: array (single-input nets) or {name: array}.

    Returns (output, cache); the cache carries everything backward needs.
    """
    if set(net.params) != set(net.param_shapes):
        raise ConfigError(f"{net.name}: parameters not initialized")
    if not isinstance(inputs, dict):
        if len(net.input_channels) != 1:
            raise ShapeError(f"{net.name} expects inputs {list(net.input_channels)}")
        inputs = {next(iter(net.input_channels)): inputs}
    if set(inputs) != set(net.input_channels):
        raise ShapeError(f"{net.name} expects inputs {sorted(net.input_channels)}, got {sorted(inputs)}")
    values = {}
    for iname, x in inputs.items():
        x = np.asarray(x, dtype=net.dtype)
        if x.ndim != 4 or x.shape[3] != net.input_channels[iname]:
            raise ShapeError(
                f"{net.name}/{iname}: expected (N,H,W,{net.input_channels[iname]}), got {x.shape}"
            )
        if x.shape[1] % net.max_factor or x.shape[2] % net.max_factor:
            raise ShapeError(
                f"{net.name}/{iname}: spatial dims {x.shape[1:3]} not divisible by {net.max_factor}"
            )
        values[iname] = x
    node_caches = {}
    for spec in net.layers:
        xs = [values[i] for i in spec.inputs]
        try:
            values[spec.name], node_caches[spec.name] = _FORWARD[spec.kind](net, spec, xs)
        except ShapeError as exc:
            raise ShapeError(f"{net.name}/{spec.name}: {exc}") from exc
    cache = {
        "net": net.name,
        "version": net._version,
        "values": values,
        "nodes": node_caches,
    }
    return values[net.output], cache


def backward(net, cache, dout):
    """Reverse pass. Returns (param_grads, input_grads)."""
    if cache.get("net") != net.name or cache.get("version") != net._version:
        raise ConfigError(f"{net.name}: stale or mismatched forward cache")
    values = cache["values"]
    grads = {}
    vgrads = {net.output: np.asarray(dout, dtype=net.dtype)}
    for spec in reversed(net.layers):
        g = vgrads.pop(spec.name, None)
        if g is None:
            continue
        xs = [values[i] for i in spec.inputs]
        dins = _BACKWARD[spec.kind](net, spec, xs, values[spec.name], cache["nodes"][spec.name], g, grads)
        for iname, din in zip(spec.inputs, dins):
            if iname in vgrads:
                vgrads[iname] += din
            else:
                vgrads[iname] = din
    input_grads = {k: vgrads.get(k, np.zeros_like(values[k])) for k in net.input_channels}
    return grads, input_grads


# ---------------------------------------------------------------------------
# per-kind forward/backward
# ---------------------------------------------------------------------------


def _fw_conv(net, spec, xs):
    w = net.params[f"{spec.name}.w"]
    b = net.params[f"{spec.name}.b"]
    return ops.conv2d(xs[0], w, b, stride=spec.stride), None


def _bw_conv(net, spec, xs, y, ncache, dy, grads):
    w = net.params[f"{spec.name}.w"]
    dw, db, dx = ops.conv2d_backward(dy, xs[0], w, stride=spec.stride)
    grads[f"{spec.name}.w"] = dw
    grads[f"{spec.name}.b"] = db
    return (dx,)


def _fw_relu(net, spec, xs):
    return ops.relu(xs[0]), None


def _bw_relu(net, spec, xs, y, ncache, dy, grads):
    return (ops.relu_backward(dy, y),)


def _fw_tanh(net, spec, xs):
    return ops.tanh(xs[0], to_unit=spec.to_unit), None


def _bw_tanh(net, spec, xs, y, ncache, dy, grads):
    return (ops.tanh_backward(dy, y, to_unit=spec.to_unit),)


def _fw_softmax2(net, spec, xs):
    return ops.softmax_channels(xs[0]), None


def _bw_softmax2(net, spec, xs, y, ncache, dy, grads):
    return (ops.softmax_channels_backward(dy, y),)


def _fw_downsample(net, spec, xs):
    return ops.avgpool(xs[0], spec.factor), None


def _bw_downsample(net, spec, xs, y, ncache, dy, grads):
    return (ops.avgpool_backward(dy, spec.factor),)


def _fw_upsample_conv(net, spec, xs):
    u = ops.upsample_nearest(xs[0], spec.factor)
    w = net.params[f"{spec.name}.w"]
    b = net.params[f"{spec.name}.b"]
    return ops.conv2d(u, w, b), None


def _bw_upsample_conv(net, spec, xs, y, ncache, dy, grads):
    u = ops.upsample_nearest(xs[0], spec.factor)
    w = net.params[f"{spec.name}.w"]
    dw, db, du = ops.conv2d_backward(dy, u, w)
    grads[f"{spec.name}.w"] = dw
    grads[f"{spec.name}.b"] = db
    return (ops.upsample_nearest_backward(du, spec.factor),)


def _fw_pointwise(net, spec, xs):
    w = net.params[f"{spec.name}.w"]
    b = net.params[f"{spec.name}.b"]
    return ops.conv2d(xs[0], w, b), None


def _bw_pointwise(net, spec, xs, y, ncache, dy, grads):
    w = net.params[f"{spec.name}.w"]
    dw, db, dx = ops.conv2d_backward(dy, xs[0], w)
    grads[f"{spec.name}.w"] = dw
    grads[f"{spec.name}.b"] = db
    return (dx,)


def _fw_res_block(net, spec, xs):
    x = xs[0]
    p = net.params
    h1 = ops.conv2d(x, p[f"{spec.name}.conv1.w"], p[f"{spec.name}.conv1.b"])
    a1 = ops.relu(h1)
    h2 = ops.conv2d(a1, p[f"{spec.name}.conv2.w"], p[f"{spec.name}.conv2.b"])
    return x + h2, a1


def _bw_res_block(net, spec, xs, y, a1, dy, grads):
    p = net.params
    dw2, db2, da1 = ops.conv2d_backward(dy, a1, p[f"{spec.name}.conv2.w"])
    dh1 = ops.relu_backward(da1, a1)
    dw1, db1, dx1 = ops.conv2d_backward(dh1, xs[0], p[f"{spec.name}.conv1.w"])
    grads[f"{spec.name}.conv1.w"] = dw1
    grads[f"{spec.name}.conv1.b"] = db1
    grads[f"{spec.name}.conv2.w"] = dw2
    grads[f"{spec.name}.conv2.b"] = db2
    return (dy + dx1,)


def _fw_dense_block(net, spec, xs):
    feats = [xs[0]]
    for j in range(spec.depth):
        inp = ops.concat_channels(feats) if len(feats) > 1 else feats[0]
        h = ops.conv2d(inp, net.params[f"{spec.name}.layer{j}.w"], net.params[f"{spec.name}.layer{j}.b"])
        feats.append(ops.relu(h))
    return ops.concat_channels(feats), feats


def _bw_dense_block(net, spec, xs, y, feats, dy, grads):
    widths = [f.shape[3] for f in feats]
    dfeats = ops.split_channels(dy, widths)
    dfeats = [d.copy() for d in dfeats]
    for j in range(spec.depth - 1, -1, -1):
        da = dfeats[j + 1]
        dh = ops.relu_backward(da, feats[j + 1])
        inp = ops.concat_channels(feats[: j + 1]) if j > 0 else feats[0]
        dw, db, dinp = ops.conv2d_backward(dh, inp, net.params[f"{spec.name}.layer{j}.w"])
        grads[f"{spec.name}.layer{j}.w"] = dw
        grads[f"{spec.name}.layer{j}.b"] = db
        for i, d in enumerate(ops.split_channels(dinp, widths[: j + 1])):
            dfeats[i] += d
    return (dfeats[0],)


def _fw_spp(net, spec, xs):
    x = xs[0]
    outs = []
    for f_ in spec.factors:
        p = ops.avgpool(x, f_)
        r = ops.conv2d(p, net.params[f"{spec.name}.scale{f_}.w"], net.params[f"{spec.name}.scale{f_}.b"])
        outs.append(ops.upsample_nearest(r, f_))
    return ops.concat_channels(outs), None


def _bw_spp(net, spec, xs, y, ncache, dy, grads):
    x = xs[0]
    douts = ops.split_channels(dy, [spec.reduce_channels] * len(spec.factors))
    dx = np.zeros_like(x)
    for f_, du in zip(spec.factors, douts):
        dr = ops.upsample_nearest_backward(du, f_)
        p = ops.avgpool(x, f_)
        dw, db, dp = ops.conv2d_backward(dr, p, net.params[f"{spec.name}.scale{f_}.w"])
        grads[f"{spec.name}.scale{f_}.w"] = dw
        grads[f"{spec.name}.scale{f_}.b"] = db
        dx += ops.avgpool_backward(dp, f_)
    return (dx,)


def _fw_concat(net, spec, xs):
    return ops.concat_channels(xs), None


def _bw_concat(net, spec, xs, y, ncache, dy, grads):
    return tuple(ops.split_channels(dy, [x.shape[3] for x in xs]))


_FORWARD = {
    "conv": _fw_conv,
    "relu": _fw_relu,
    "tanh": _fw_tanh,
    "softmax2": _fw_softmax2,
    "downsample": _fw_downsample,
    "upsample_conv": _fw_upsample_conv,
    "pointwise_conv": _fw_pointwise,
    "res_block": _fw_res_block,
    "dense_block": _fw_dense_block,
    "spp": _fw_spp,
    "concat": _fw_concat,
}

_BACKWARD = {
    "conv": _bw_conv,
    "relu": _bw_relu,
    "tanh": _bw_tanh,
    "softmax2": _bw_softmax2,
    "downsample": _bw_downsample,
    "upsample_conv": _bw_upsample_conv,
    "pointwise_conv": _bw_pointwise,
    "res_block": _bw_res_block,
    "dense_block": _bw_dense_block,
    "spp": _bw_spp,
    "concat": _bw_concat,
}
