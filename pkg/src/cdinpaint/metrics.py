"""Image distance metrics and the classifier-agreement similarity ratio."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .decompression import block_mean, resize_bilinear
from .optim import AdamState, adam_step
from .tensor_core import ConvParams, conv2d_backward, conv2d_forward, leaky_relu, leaky_relu_backward


class Classifier(Protocol):
    def logits(self, image: np.ndarray) -> np.ndarray: ...


@dataclass
class SimilarityReport:
    n: int
    similarity: float
    similarity5: float
    top1: list[bool] = field(default_factory=list)
    top5: list[bool] = field(default_factory=list)


def top_indices(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest logits; equal values keep the smaller index first."""
    return np.argsort(-np.asarray(logits, dtype=np.float64), kind="stable")[:k]


def similarity_ratio(
    outputs: Sequence[np.ndarray], truths: Sequence[np.ndarray], cn: Classifier, top_k: int = 5
) -> SimilarityReport:
    """Fraction of pairs whose output's top class is the truth's top class (or in its top ``top_k``)."""
    if len(outputs) != len(truths):
        raise ValueError(f"{len(outputs)} outputs vs {len(truths)} truths")
    if not outputs:
        raise ValueError("similarity ratio needs at least one pair")
    top1, topk = [], []
    for out, truth in zip(outputs, truths):
        pred = int(np.argmax(cn.logits(out)))
        ranked = top_indices(cn.logits(truth), top_k)
        top1.append(pred == int(ranked[0]))
        topk.append(pred in ranked)
    n = len(top1)
    return SimilarityReport(n, sum(top1) / n, sum(topk) / n, top1, topk)


def image_l1(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(np.asarray(a, np.float64) - b)))


def image_l2(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((np.asarray(a, np.float64) - b) ** 2))


def format_rows(rows: Sequence[tuple]) -> str:
    """Comma-separated ``name,l1,l2,similarity,similarity5`` lines with a header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "l1", "l2", "similarity", "similarity5"])
    for name, *values in rows:
        writer.writerow([name] + ["" if v is None else f"{v:.6f}" for v in values])
    return buf.getvalue()


class ToyClassifier:
    """Three stride-2 3x3 convs with leaky ReLU, global average pool, linear head.

    Input images of any size are box-averaged (or bilinearly resized) to
    ``input_size`` first, so evaluation on full-resolution outputs stays cheap.
    """

    def __init__(self, classes: int, channels=(8, 16, 32), input_size: int = 32, slope: float = 0.2):
        self.classes = classes
        self.input_size = input_size
        self.slope = slope
        self.convs = []
        c_in = 3
        for c in channels:
            self.convs.append(ConvParams(np.zeros((c, c_in, 3, 3), np.float32), np.zeros(c, np.float32), 2, 1))
            c_in = c
        self.head_w = np.zeros((classes, c_in), np.float32)
        self.head_b = np.zeros(classes, np.float32)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for i, p in enumerate(self.convs):
            params[f"cls.conv{i}.weight"] = p.weight
            params[f"cls.conv{i}.bias"] = p.bias
        params["cls.head.weight"] = self.head_w
        params["cls.head.bias"] = self.head_b
        return params

    def init_parameters(self, seed: int):
        rng = np.random.default_rng(seed)
        for name, p in self.parameters().items():
            if name.endswith("weight"):
                p[...] = rng.standard_normal(p.shape) * np.sqrt(2.0 / np.prod(p.shape[1:]))
            else:
                p[...] = 0

    def prepare(self, image: np.ndarray) -> np.ndarray:
        """(h, w, 3) image -> (1, 3, s, s) network input."""
        s = self.input_size
        h, w = image.shape[:2]
        if (h, w) != (s, s):
            if h == w and h % s == 0:
                image = block_mean(image, h // s)
            else:
                image = resize_bilinear(image, s, s)
        return np.ascontiguousarray(image.transpose(2, 0, 1)[None], dtype=np.float32)

    def _forward(self, x: np.ndarray):
        cache = []
        h = x
        for p in self.convs:
            pre = conv2d_forward(h, p)
            cache.append((h, pre))
            h = leaky_relu(pre, self.slope)
        pooled = h.mean(axis=(2, 3))
        logits = pooled @ self.head_w.T + self.head_b
        return logits, (cache, h, pooled)

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x)[0]

    def logits(self, image: np.ndarray) -> np.ndarray:
        return self._forward(self.prepare(image))[0][0]

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy and parameter gradients for a batch."""
        logits, (cache, h, pooled) = self._forward(x)
        z = logits.astype(np.float64)
        z -= z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = len(labels)
        loss = -logp[np.arange(n), labels].mean()
        g_logits = np.exp(logp)
        g_logits[np.arange(n), labels] -= 1
        g_logits = (g_logits / n).astype(np.float32)
        grads = {
            "cls.head.weight": g_logits.T @ pooled,
            "cls.head.bias": g_logits.sum(axis=0),
        }
        g = (g_logits @ self.head_w)[:, :, None, None] / (h.shape[2] * h.shape[3])
        g = np.broadcast_to(g, h.shape)
        for i in range(len(self.convs) - 1, -1, -1):
            x_in, pre = cache[i]
            g = leaky_relu_backward(pre, g, self.slope)
            g, g_w, g_b = conv2d_backward(x_in, self.convs[i], g)
            grads[f"cls.conv{i}.weight"] = g_w
            grads[f"cls.conv{i}.bias"] = g_b
        return float(loss), grads, logits

    def state_dict(self) -> dict[str, np.ndarray]:
        cfg = {
            "__cfg__.cls.classes": np.array(self.classes, np.float32),
            "__cfg__.cls.input_size": np.array(self.input_size, np.float32),
            "__cfg__.cls.channels": np.array([p.out_channels for p in self.convs], np.float32),
        }
        return {**cfg, **self.parameters()}

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray]) -> "ToyClassifier":
        state = dict(state)
        try:
            classes = int(state.pop("__cfg__.cls.classes"))
            size = int(state.pop("__cfg__.cls.input_size"))
            channels = tuple(int(c) for c in state.pop("__cfg__.cls.channels"))
        except KeyError as exc:
            raise ValueError(f"not a classifier checkpoint: missing {exc}") from None
        model = cls(classes, channels, size)
        own = model.parameters()
        if set(state) != set(own):
            raise ValueError(f"classifier entries differ: {sorted(set(state) ^ set(own))[:5]}")
        for k, v in state.items():
            own[k][...] = v
        return model


class ClassifierTrainingError(RuntimeError):
    pass


def train_toy_classifier(
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    classes: int,
    seed: int = 0,
    steps: int = 2000,
    target_accuracy: float = 0.9,
    lr: float = 3e-3,
    input_size: int = 32,
) -> tuple[ToyClassifier, float]:
    """Full-batch Adam on cross-entropy until ``target_accuracy`` or ``steps``.

    Returns ``(classifier, train_accuracy)``; raises ClassifierTrainingError if
    the budget runs out below 60% accuracy.
    """
    labels = np.asarray(labels, dtype=int)
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    counts = np.bincount(labels, minlength=classes)
    if len(counts) > classes or counts.min() < 8:
        raise ValueError(f"need >= 8 images for each of {classes} classes, got counts {counts.tolist()}")
    model = ToyClassifier(classes, input_size=input_size)
    model.init_parameters(seed)
    x = np.concatenate([model.prepare(img) for img in images])
    opt = AdamState(lr=lr, beta1=0.9)
    accuracy = 0.0
    for _ in range(steps):
        _, grads, logits = model.loss_and_grads(x, labels)
        accuracy = float(np.mean(np.argmax(logits, axis=1) == labels))
        if accuracy >= target_accuracy:
            break
        adam_step(model.parameters(), grads, opt)
    else:
        accuracy = float(np.mean(np.argmax(model.logits_batch(x), axis=1) == labels))
    if accuracy < 0.6:
        raise ClassifierTrainingError(f"classifier reached only {accuracy:.1%} train accuracy")
    return model, accuracy
