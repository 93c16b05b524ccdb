"""Residual gated-convolution network that repairs an image into a thumbnail.

The architecture is described by a small text format, one block per line::

    # name   kind        kernel  channels  stride  count
    RB_0     residual    1       64        2       1
    CB_0     conv_stack  5       64        2       5

A ``conv_stack`` of ``count`` layers uses ``stride`` on its first layer and
stride 1 afterwards. Every ``residual`` block must be followed by the
``conv_stack`` it pairs with; a single ``mapping`` block ends the list.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gated_layers import GatedConvLayer
from .tensor_core import (
    DTYPE,
    BatchNormState,
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    elementwise_add,
    sigmoid,
    sigmoid_backward,
)

KINDS = ("residual", "conv_stack", "mapping")

DEFAULT_ARCH = """\
# name  kind        kernel  channels  stride  count
RB_0    residual    1       64        2       1
CB_0    conv_stack  5       64        2       5
RB_1    residual    1       196       2       1
CB_1    conv_stack  5       196       2       5
RB_2    residual    3       256       2       1
CB_2    conv_stack  3       256       2       7
MB      mapping     3       3         1       1
"""


@dataclass(frozen=True)
class BlockSpec:
    name: str
    kind: str
    layers: tuple[tuple[int, int, int], ...]  # (kernel, channels, stride)

    @property
    def out_channels(self) -> int:
        return self.layers[-1][1]

    @property
    def stride(self) -> int:
        return int(np.prod([s for _, _, s in self.layers]))

    @classmethod
    def from_row(cls, name: str, kind: str, kernel: int, channels: int, stride: int, count: int):
        if kind not in KINDS:
            raise ValueError(f"block {name}: unknown kind {kind!r}")
        if min(kernel, channels, stride, count) < 1:
            raise ValueError(f"block {name}: kernel/channels/stride/count must be positive")
        if kind != "conv_stack" and count != 1:
            raise ValueError(f"block {name}: only conv_stack blocks may repeat layers")
        layers = ((kernel, channels, stride),) + ((kernel, channels, 1),) * (count - 1)
        return cls(name, kind, layers)


def parse_arch(text: str) -> list[BlockSpec]:
    specs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"arch line {lineno}: expected 6 fields, got {len(parts)}: {raw!r}")
        name, kind, *nums = parts
        try:
            kernel, channels, stride, count = (int(v) for v in nums)
        except ValueError:
            raise ValueError(f"arch line {lineno}: non-integer field in {raw!r}") from None
        specs.append(BlockSpec.from_row(name, kind, kernel, channels, stride, count))
    return specs


def load_arch(path: str | Path) -> list[BlockSpec]:
    return parse_arch(Path(path).read_text(encoding="utf-8"))


def format_arch(specs: list[BlockSpec]) -> str:
    lines = ["# name  kind  kernel  channels  stride  count"]
    for b in specs:
        k, c, s = b.layers[0]
        lines.append(f"{b.name} {b.kind} {k} {c} {s} {len(b.layers)}")
    return "\n".join(lines) + "\n"


def default_spec(channels: tuple[int, int, int] = (64, 196, 256)) -> list[BlockSpec]:
    """Default layout, optionally with the three stage widths replaced."""
    specs = parse_arch(DEFAULT_ARCH)
    if tuple(channels) == (64, 196, 256):
        return specs
    out = []
    stage = 0
    for b in specs:
        if b.kind == "mapping":
            out.append(b)
            continue
        c = channels[stage]
        out.append(BlockSpec(b.name, b.kind, tuple((k, c, s) for k, _, s in b.layers)))
        if b.kind == "conv_stack":
            stage += 1
    return out


def _padding(kernel: int) -> int:
    return kernel // 2


def _conv(in_c: int, out_c: int, kernel: int, stride: int, dtype) -> ConvParams:
    return ConvParams(
        np.zeros((out_c, in_c, kernel, kernel), dtype),
        np.zeros(out_c, dtype),
        stride,
        _padding(kernel),
    )


class Network:
    """Pairs of (plain residual conv, gated conv stack) followed by a gated mapping layer.

    Parameter names follow ``<block>.<layer>.<param>``, e.g.
    ``CB_0.Conv_3.mask_weight`` or ``RB_1.res.weight``.
    """

    def __init__(self, specs: list[BlockSpec], gate: str = "sigmoid", slope: float = 0.2, dtype=DTYPE):
        self.specs = list(specs)
        self.gate = gate
        self.slope = slope
        self.dtype = np.dtype(dtype)
        self.pairs: list[tuple[str, ConvParams, list[tuple[str, str, GatedConvLayer]]]] = []
        self.mapping: tuple[str, GatedConvLayer] | None = None
        self._res_grads: dict[str, dict[str, np.ndarray]] = {}
        self._build()
        self._cache = None

    def _build(self):
        specs = self.specs
        if not specs or specs[-1].kind != "mapping":
            raise ValueError("architecture must end with a mapping block")
        if sum(b.kind == "mapping" for b in specs) != 1:
            raise ValueError("architecture must contain exactly one mapping block")
        body = specs[:-1]
        if len(body) % 2:
            raise ValueError("residual and conv_stack blocks must come in pairs")
        image_c, mask_c = 3, 1
        conv_index = 0
        for rb, cb in zip(body[::2], body[1::2]):
            if rb.kind != "residual" or cb.kind != "conv_stack":
                raise ValueError(f"expected residual/conv_stack pair, got {rb.name}:{rb.kind}, {cb.name}:{cb.kind}")
            if rb.out_channels != cb.out_channels:
                raise ValueError(
                    f"pair {rb.name}/{cb.name}: channel mismatch {rb.out_channels} vs {cb.out_channels}"
                )
            if rb.stride != cb.stride:
                raise ValueError(f"pair {rb.name}/{cb.name}: stride mismatch {rb.stride} vs {cb.stride}")
            (rk, rc, rs), = rb.layers
            res = _conv(image_c, rc, rk, rs, self.dtype)
            layers = []
            for k, c, s in cb.layers:
                layer = GatedConvLayer(
                    _conv(image_c, c, k, s, self.dtype),
                    _conv(mask_c, c, k, s, self.dtype),
                    activation="leaky_relu",
                    gate=self.gate,
                    batch_norm=BatchNormState.create(c, self.dtype),
                    slope=self.slope,
                )
                layers.append((cb.name, f"Conv_{conv_index}", layer))
                conv_index += 1
                image_c = mask_c = c
            self.pairs.append((rb.name, res, layers))
            self._res_grads[rb.name] = {"weight": np.zeros_like(res.weight), "bias": np.zeros_like(res.bias)}
        mb = specs[-1]
        (k, c, s), = mb.layers
        if c != 3:
            raise ValueError(f"mapping block must emit 3 channels, got {c}")
        self.mapping = (
            mb.name,
            GatedConvLayer(
                _conv(image_c, c, k, s, self.dtype),
                _conv(mask_c, c, k, s, self.dtype),
                activation="identity",
                gate=self.gate,
                batch_norm=None,
                slope=self.slope,
            ),
        )

    # -- bookkeeping -------------------------------------------------------

    def gated_layers(self):
        """Yield ``(block, layer_name, layer)`` in forward order, mapping last."""
        for _, _, layers in self.pairs:
            yield from layers
        yield self.mapping[0], "map", self.mapping[1]

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for rb_name, res, layers in self.pairs:
            params[f"{rb_name}.res.weight"] = res.weight
            params[f"{rb_name}.res.bias"] = res.bias
            for block, lname, layer in layers:
                for k, v in layer.parameters().items():
                    params[f"{block}.{lname}.{k}"] = v
        block, layer = self.mapping
        for k, v in layer.parameters().items():
            params[f"{block}.map.{k}"] = v
        return params

    def grads(self) -> dict[str, np.ndarray]:
        grads = {}
        for rb_name, _, layers in self.pairs:
            grads[f"{rb_name}.res.weight"] = self._res_grads[rb_name]["weight"]
            grads[f"{rb_name}.res.bias"] = self._res_grads[rb_name]["bias"]
            for block, lname, layer in layers:
                for k, v in layer.grads.items():
                    grads[f"{block}.{lname}.{k}"] = v
        block, layer = self.mapping
        for k, v in layer.grads.items():
            grads[f"{block}.map.{k}"] = v
        return grads

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for block, lname, layer in self.gated_layers():
            for k, v in layer.buffers().items():
                out[f"{block}.{lname}.{k}"] = v
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = self.state_dict()
        unknown = sorted(set(state) - set(own))
        if unknown:
            raise KeyError(f"unknown parameter names: {unknown[:5]}")
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"missing parameters: {missing[:5]}")
        for k, v in state.items():
            if own[k].shape != np.shape(v):
                raise ValueError(f"{k}: shape {np.shape(v)} does not match {own[k].shape}")
            own[k][...] = v

    def zero_grad(self):
        for g in self.grads().values():
            g[...] = 0

    def train(self, mode: bool = True):
        for _, _, layer in self.gated_layers():
            if layer.bn is not None:
                layer.bn.training = mode
        return self

    def eval(self):
        return self.train(False)

    @property
    def downsample_factor(self) -> int:
        return int(np.prod([res.stride for _, res, _ in self.pairs]))

    def num_parameters(self) -> int:
        return sum(v.size for v in self.parameters().values())

    # -- computation -------------------------------------------------------

    def _check_inputs(self, image: np.ndarray, mask: np.ndarray):
        if image.ndim != 4 or image.shape[1] != 3:
            raise ValueError(f"image must have shape (n, 3, h, w), got {image.shape}")
        if mask.ndim != 4 or mask.shape[1] != 1:
            raise ValueError(f"mask must have shape (n, 1, h, w), got {mask.shape}")
        if image.shape[0] != mask.shape[0] or image.shape[2:] != mask.shape[2:]:
            raise ValueError(f"image {image.shape} and mask {mask.shape} disagree")
        f = self.downsample_factor
        h, w = image.shape[2:]
        if h % f or w % f:
            raise ValueError(f"input size {h}x{w} not divisible by downsample factor {f}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask must be binary")

    def forward(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Map (n,3,h,w) image and (n,1,h,w) mask to an (n,3,h/f,w/f) thumbnail in (0,1)."""
        self._check_inputs(image, mask)
        dt = image.dtype if image.dtype == np.float64 else self.dtype
        mask = mask.astype(dt)
        x = image.astype(dt) * mask
        m = mask
        pair_inputs = []
        for _, res, layers in self.pairs:
            pair_inputs.append(x)
            r = conv2d_forward(x, res)
            y = x
            for _, _, layer in layers:
                y, m = layer.forward(y, m)
            x = elementwise_add(y, r)
        z, _ = self.mapping[1].forward(x, m)
        out = sigmoid(z)
        self._cache = (mask, pair_inputs, out)
        return out

    def backward(self, grad_output: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads; return the gradient w.r.t. the input image."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        mask, pair_inputs, out = self._cache
        g = sigmoid_backward(out, grad_output.astype(out.dtype))
        g, g_m = self.mapping[1].backward(g)
        for (rb_name, res, layers), x_in in zip(reversed(self.pairs), reversed(pair_inputs)):
            g_res_in, g_w, g_b = conv2d_backward(x_in, res, g)
            self._res_grads[rb_name]["weight"] += g_w
            self._res_grads[rb_name]["bias"] += g_b
            g_y = g
            for _, _, layer in reversed(layers):
                g_y, g_m = layer.backward(g_y, g_m)
            g = g_y + g_res_in
        return g * mask


def build_network(specs: list[BlockSpec] | None = None, **kwargs) -> Network:
    return Network(default_spec() if specs is None else specs, **kwargs)


def init_parameters(net: Network, seed: int) -> None:
    """He-normal conv weights, zero biases, unit gamma, zero beta; reset BN stats."""
    rng = np.random.default_rng(seed)
    for name, value in net.parameters().items():
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("weight", "mask_weight"):
            fan_in = int(np.prod(value.shape[1:]))
            value[...] = rng.standard_normal(value.shape) * np.sqrt(2.0 / fan_in)
        elif leaf == "gamma":
            value[...] = 1
        else:
            value[...] = 0
    for name, value in net.buffers().items():
        value[...] = 1 if name.endswith("running_var") else 0


def forward(net: Network, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return net.forward(image, mask)
