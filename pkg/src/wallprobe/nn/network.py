"""Sequential network: parameter storage, forward/backward with caches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParseError, ShapeError, StateError
from .layers import LayerSpec, glorot, layer_backward, layer_forward, output_shape, param_shapes

_DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass
class ForwardCache:
    """Per-layer state saved by a forward pass; consumed by ``Network.backward``."""

    owner: object
    version: int
    saved: list = field(default_factory=list)
    train: bool = False


class Network:
    """A stack of layers applied in order.

    ``params[i]`` holds the arrays of layer ``i`` (weights then bias, empty for
    reshape). Arrays are updated in place by the optimiser.
    """

    def __init__(self, specs, input_shape, seed=0, dtype="float64", params=None):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_text(s) for s in specs]
        if not self.specs:
            raise ShapeError("a network needs at least one layer")
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype_name = np.dtype(dtype).name
        if self.dtype_name not in _DTYPES:
            raise ShapeError(f"unsupported dtype {dtype!r}")
        self.dtype = _DTYPES[self.dtype_name]
        self.shapes = [self.input_shape]
        for spec in self.specs:
            self.shapes.append(output_shape(spec, self.shapes[-1]))
        self._token = object()
        self._version = 0
        if params is None:
            rng = np.random.default_rng(seed)
            params = [glorot(s, shp, rng, self.dtype) for s, shp in zip(self.specs, self.shapes)]
        self.set_params(params)

    @property
    def output_shape(self):
        return self.shapes[-1]

    @property
    def n_params(self):
        return sum(p.size for group in self.params for p in group)

    def set_params(self, params):
        fixed = []
        for spec, shp, group in zip(self.specs, self.shapes, params):
            want = param_shapes(spec, shp)
            if len(group) != len(want):
                raise ShapeError(f"layer {spec.kind} expects {len(want)} arrays, got {len(group)}")
            arrs = []
            for arr, w in zip(group, want):
                arr = np.array(arr, dtype=self.dtype)
                if arr.shape != tuple(w):
                    raise ShapeError(f"parameter shape {arr.shape} != {tuple(w)}")
                arrs.append(arr)
            fixed.append(arrs)
        if len(fixed) != len(self.specs):
            raise ShapeError(f"expected {len(self.specs)} parameter groups, got {len(params)}")
        self.params = fixed
        self._version += 1

    def touch(self):
        """Mark parameters as changed; caches from earlier passes become stale."""
        self._version += 1

    def _check_input(self, x):
        x = np.asarray(x)
        if x.ndim == len(self.input_shape):
            x = x[None]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"layer 0 ({self.specs[0].kind}) expects input {self.input_shape}, got {tuple(x.shape[1:])}")
        if not np.all(np.isfinite(x)):
            raise ShapeError("network input contains non-finite values")
        return x.astype(self.dtype, copy=False)

    def forward(self, x, train=False, seed=None, rng=None):
        """Returns ``(output, cache)``. Dropout is active only when ``train``."""
        x = self._check_input(x)
        if train and rng is None:
            rng = np.random.default_rng(seed)
        cache = ForwardCache(self._token, self._version, train=train)
        for spec, group in zip(self.specs, self.params):
            x, saved = layer_forward(spec, group, x, train, rng)
            cache.saved.append(saved)
        return x, cache

    def backward(self, cache, dout, input_grad=True):
        """Returns ``(param grads, input grad)`` for the pass recorded in ``cache``.

        With ``input_grad=False`` the input gradient is skipped (returned as None),
        which saves the largest matmul of a wide first layer.
        """
        if cache is None:
            raise StateError("backward called without a forward cache")
        if not isinstance(cache, ForwardCache) or cache.owner is not self._token:
            raise StateError("forward cache belongs to a different network")
        if cache.version != self._version:
            raise StateError("parameters changed since the forward pass that made this cache")
        if len(cache.saved) != len(self.specs):
            raise StateError("forward cache is incomplete")
        dout = np.asarray(dout, dtype=self.dtype)
        grads = [None] * len(self.specs)
        first = 0
        if not input_grad:
            # layers below the first parametrised one need no gradient at all
            while first < len(self.specs) and not self.params[first]:
                first += 1
        for i in range(len(self.specs) - 1, first - 1, -1):
            need = input_grad or i > first
            dout, grads[i] = layer_backward(self.specs[i], self.params[i], cache.saved[i], dout, need)
        for i in range(first):
            grads[i] = []
        if not input_grad:
            dout = None
        return grads, dout

    def predict(self, x, batch_size=64):
        x = self._check_input(x)
        out = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def __call__(self, x):
        return self.predict(x)

    def copy(self):
        return Network(self.specs, self.input_shape, dtype=self.dtype_name,
                       params=[[p.copy() for p in g] for g in self.params])

    # --- serialisation via the shared container ---

    def to_parts(self, prefix):
        header = [(f"{prefix}.dtype", self.dtype_name),
                  (f"{prefix}.input", "x".join(map(str, self.input_shape)))]
        header += [(f"{prefix}.layer", s.to_text()) for s in self.specs]
        arrays = [(f"{prefix}.p{i}.{j}", p) for i, g in enumerate(self.params) for j, p in enumerate(g)]
        return header, arrays

    @classmethod
    def from_parts(cls, header, arrays, prefix):
        def val(key):
            for k, v in header:
                if k == key:
                    return v
            raise ParseError(f"missing header key {key!r}")

        layers = [v for k, v in header if k == f"{prefix}.layer"]
        if not layers:
            raise ParseError(f"no layers stored for {prefix!r}")
        try:
            specs = [LayerSpec.from_text(t) for t in layers]
            shape = tuple(int(d) for d in val(f"{prefix}.input").split("x"))
            probe = cls(specs, shape, dtype=val(f"{prefix}.dtype"))
        except (ValueError, TypeError) as exc:
            raise ParseError(f"bad network description for {prefix!r}: {exc}") from None
        params = []
        for i, group in enumerate(probe.params):
            arrs = []
            for j in range(len(group)):
                key = f"{prefix}.p{i}.{j}"
                if key not in arrays:
                    raise ParseError(f"missing parameter array {key!r}")
                arrs.append(arrays[key])
            params.append(arrs)
        try:
            probe.set_params(params)
        except ShapeError as exc:
            raise ParseError(str(exc)) from None
        return probe


def build(specs, input_shape, seed=0, dtype="float64"):
    return Network(specs, input_shape, seed=seed, dtype=dtype)


def forward(net: Network, x, train=False, seed=None):
    return net.forward(x, train=train, seed=seed)


def backward(net: Network, cache, dout, input_grad=True):
    return net.backward(cache, dout, input_grad)
