"""Masked convolution layers: gated convolution and partial convolution."""

from __future__ import annotations

import numpy as np

from .tensor_core import (
    BatchNormState,
    ConvParams,
    batch_norm_backward,
    batch_norm_forward,
    conv2d_backward,
    conv2d_forward,
    leaky_relu,
    leaky_relu_backward,
    sigmoid,
    sigmoid_backward,
)

ACTIVATIONS = ("leaky_relu", "identity")
GATES = ("sigmoid", "identity")


class GatedConvLayer:
    """Feature convolution multiplied by a learned soft gate from the mask stream.

    ``image_out = bn(act(conv(image))) * gate`` with
    ``gate = gate_activation(conv(mask))``. The gate itself is passed on as the
    next layer's mask stream.
    """

    def __init__(
        self,
        image_conv: ConvParams,
        mask_conv: ConvParams,
        activation: str = "leaky_relu",
        gate: str = "sigmoid",
        batch_norm: BatchNormState | None = None,
        slope: float = 0.2,
    ):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if gate not in GATES:
            raise ValueError(f"unknown gate activation {gate!r}")
        if image_conv.out_channels != mask_conv.out_channels:
            raise ValueError(
                f"image conv has {image_conv.out_channels} outputs, mask conv {mask_conv.out_channels}"
            )
        if (
            image_conv.kernel != mask_conv.kernel
            or image_conv.stride != mask_conv.stride
            or image_conv.padding != mask_conv.padding
        ):
            raise ValueError("image and mask convolutions must share kernel, stride and padding")
        if batch_norm is not None and batch_norm.channels != image_conv.out_channels:
            raise ValueError("batch_norm channels must match conv outputs")
        self.image_conv = image_conv
        self.mask_conv = mask_conv
        self.activation = activation
        self.gate = gate
        self.bn = batch_norm
        self.slope = slope
        self.grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self._cache = None

    def parameters(self) -> dict[str, np.ndarray]:
        params = {
            "weight": self.image_conv.weight,
            "bias": self.image_conv.bias,
            "mask_weight": self.mask_conv.weight,
            "mask_bias": self.mask_conv.bias,
        }
        if self.bn is not None:
            params["gamma"] = self.bn.gamma
            params["beta"] = self.bn.beta
        return params

    def buffers(self) -> dict[str, np.ndarray]:
        if self.bn is None:
            return {}
        return {"running_mean": self.bn.running_mean, "running_var": self.bn.running_var}

    def forward(self, image_feat: np.ndarray, mask_feat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if image_feat.shape[2:] != mask_feat.shape[2:]:
            raise ValueError(
                f"image/mask spatial mismatch: {image_feat.shape[2:]} vs {mask_feat.shape[2:]}"
            )
        if image_feat.shape[0] != mask_feat.shape[0]:
            raise ValueError("image/mask batch sizes differ")
        pre = conv2d_forward(image_feat, self.image_conv)
        feat = leaky_relu(pre, self.slope) if self.activation == "leaky_relu" else pre
        bn_cache = None
        if self.bn is not None:
            feat, bn_cache = batch_norm_forward(feat, self.bn)
        gate_pre = conv2d_forward(mask_feat, self.mask_conv)
        gate = sigmoid(gate_pre) if self.gate == "sigmoid" else gate_pre
        self._cache = (image_feat, mask_feat, pre, feat, bn_cache, gate)
        return feat * gate, gate

    def backward(
        self, grad_out: np.ndarray, grad_gate: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Accumulate parameter grads; return grads for (image_feat, mask_feat)."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        image_feat, mask_feat, pre, feat, bn_cache, gate = self._cache
        g_feat = grad_out * gate
        g_gate = grad_out * feat
        if grad_gate is not None:
            g_gate = g_gate + grad_gate

        if bn_cache is not None:
            g_feat, g_gamma, g_beta = batch_norm_backward(g_feat, bn_cache)
            self.grads["gamma"] += g_gamma
            self.grads["beta"] += g_beta
        if self.activation == "leaky_relu":
            g_feat = leaky_relu_backward(pre, g_feat, self.slope)
        g_image, g_w, g_b = conv2d_backward(image_feat, self.image_conv, g_feat)
        self.grads["weight"] += g_w
        self.grads["bias"] += g_b

        if self.gate == "sigmoid":
            g_gate = sigmoid_backward(gate, g_gate)
        g_mask, g_mw, g_mb = conv2d_backward(mask_feat, self.mask_conv, g_gate)
        self.grads["mask_weight"] += g_mw
        self.grads["mask_bias"] += g_mb
        return g_image, g_mask

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0


def gated_forward(
    image_feat: np.ndarray, mask_feat: np.ndarray, layer: GatedConvLayer
) -> tuple[np.ndarray, np.ndarray]:
    return layer.forward(image_feat, mask_feat)


class PartialConvLayer:
    """Convolution whose output is zeroed wherever its window saw no valid pixel.

    There is no renormalization by the valid-pixel count; the window mask is
    simply ``min(sum(window), 1)``.
    """

    def __init__(self, image_conv: ConvParams):
        self.image_conv = image_conv
        kh, kw = image_conv.kernel
        self.window = ConvParams(
            np.ones((1, 1, kh, kw), dtype=np.float64),
            np.zeros(1, dtype=np.float64),
            image_conv.stride,
            image_conv.padding,
        )

    def window_mask(self, mask: np.ndarray) -> np.ndarray:
        if mask.ndim != 4 or mask.shape[1] != 1:
            raise ValueError(f"partial conv mask must have shape (n, 1, h, w), got {mask.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("partial conv mask must be binary (0 or 1)")
        counts = conv2d_forward(mask.astype(np.float64), self.window)
        return np.minimum(counts, 1.0)

    def forward(self, image: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if image.shape[2:] != mask.shape[2:]:
            raise ValueError(f"image/mask spatial mismatch: {image.shape[2:]} vs {mask.shape[2:]}")
        window_out = self.window_mask(mask).astype(image.dtype)
        out = conv2d_forward(image, self.image_conv) * window_out
        return out, window_out


def partial_forward(
    image: np.ndarray, mask: np.ndarray, layer: PartialConvLayer
) -> tuple[np.ndarray, np.ndarray]:
    return layer.forward(image, mask)
