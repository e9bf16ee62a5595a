"""Latent-space augmentation and the temporal-conv activity classifier.

Training sequences are augmented by sampling each frame's latent
distribution with a grid of global scale values (one scale per generated
sequence); the non-augmented baseline uses the latent means directly. The
classifier is a 1D convolution over time that compresses the latent
dimension by a factor of 4, a padding-masked temporal average pool, and a
linear layer to the 9 activity logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import RadposeError
from .optim import ParamStore, adam_step
from .rng import Rng
from .skeleton import N_ACTIVITIES


@dataclass
class FrameLatent:
    """Numpy-valued latent parameters of one encoded frame/window."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class LatentSequence:
    frames: list[FrameLatent]
    label: int

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("latent sequence must have at least one frame")
        if not 0 <= self.label < N_ACTIVITIES:
            raise ValueError(f"label must be in [0, {N_ACTIVITIES})")

    @property
    def mu_matrix(self) -> np.ndarray:
        return np.stack([f.mu for f in self.frames])

    @property
    def sigma_matrix(self) -> np.ndarray:
        return np.stack([f.sigma for f in self.frames])


@dataclass
class AugmentationPlan:
    samples_per_sequence: int = 100
    alphas: np.ndarray = field(default_factory=lambda: np.array([0.0129]))

    def __post_init__(self):
        self.alphas = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        if np.any(self.alphas < 0):
            raise ValueError("alpha values must be non-negative")
        if self.samples_per_sequence < 1:
            raise ValueError("need at least one sample per sequence")


def default_plan(alpha_learned: float, rng: Rng, span: float = 0.01,
                 n_draws: int = 10, samples_per_sequence: int = 100) -> AugmentationPlan:
    """The learned scale plus n_draws uniform draws from learned +- span."""
    draws = alpha_learned - span + 2 * span * rng.uniform(n_draws)
    alphas = np.concatenate([[alpha_learned], np.maximum(draws, 0.0)])
    return AugmentationPlan(samples_per_sequence, alphas)


class LaplaceAugmentError(RadposeError):
    """Augmentation is defined for the Gaussian latent family only."""


def augment(seq: LatentSequence, plan: AugmentationPlan, rng: Rng,
            family: str = "gauss") -> list[np.ndarray]:
    """Sampled sequences [L, d_lat]; the scale cycles through plan.alphas."""
    if family != "gauss":
        raise LaplaceAugmentError("latent augmentation supports the Gaussian family only")
    mu = seq.mu_matrix
    sigma = seq.sigma_matrix
    out = []
    for i in range(plan.samples_per_sequence):
        alpha = plan.alphas[i % len(plan.alphas)]
        eps = rng.normal(mu.shape)
        out.append(mu + alpha * eps * sigma)
    return out


def mean_sequences(seqs: list[LatentSequence]) -> list[tuple[np.ndarray, int]]:
    """Non-augmented baseline: one mean sequence (z = mu) per input."""
    return [(s.mu_matrix, s.label) for s in seqs]


def augmented_sequences(
    seqs: list[LatentSequence], plan: AugmentationPlan, rng: Rng
) -> list[tuple[np.ndarray, int]]:
    out = []
    for si, seq in enumerate(seqs):
        for z in augment(seq, plan, rng.derive(si)):
            out.append((z, seq.label))
    return out


@dataclass
class ClassifierConfig:
    d_lat: int
    kernel: int = 3
    n_classes: int = N_ACTIVITIES
    epochs: int = 60
    batch_size: int = 16
    lr: float = 3e-3

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        if self.d_lat % 4 != 0:
            raise ValueError("d_lat must be divisible by the channel reduction factor 4")

    @property
    def hidden(self) -> int:
        return self.d_lat // 4


def init_classifier(config: ClassifierConfig, rng: Rng) -> ParamStore:
    store = ParamStore()
    scale = np.sqrt(2.0 / (config.d_lat * config.kernel))
    for k in range(config.kernel):
        store.add(f"conv.w{k}", scale * rng.normal((config.d_lat, config.hidden)))
    store.add("conv.b", np.zeros(config.hidden))
    store.add("fc.w", np.sqrt(1.0 / config.hidden) * rng.normal((config.hidden, config.n_classes)))
    store.add("fc.b", np.zeros(config.n_classes))
    return store


def _logits(params: ParamStore, config: ClassifierConfig, z: np.ndarray | ad.Var,
            length: int | None = None) -> ad.Var:
    """Conv over time, masked average pool, linear head. ``length`` masks
    padding frames appended beyond the true sequence length."""
    x = z if isinstance(z, ad.Var) else ad.lift(np.asarray(z, dtype=np.float64))
    n_frames = x.value.shape[0]
    true_len = n_frames if length is None else int(length)
    half = config.kernel // 2
    pad = np.zeros((half, config.d_lat))
    padded = ad.concat([ad.lift(pad), x, ad.lift(pad)], axis=0)
    acc = None
    for k in range(config.kernel):
        shifted = ad.slice_axis(padded, 0, k, k + n_frames)
        term = ad.matmul(shifted, params[f"conv.w{k}"])
        acc = term if acc is None else ad.add(acc, term)
    h = ad.relu(ad.add(acc, params["conv.b"]))  # [L, hidden]
    mask = (np.arange(n_frames) < true_len).astype(float)[:, None]
    pooled = ad.mul(ad.vsum(ad.mul(h, ad.lift(mask)), axis=0, keepdims=True),
                    ad.lift(1.0 / true_len))
    return ad.reshape(ad.add(ad.matmul(pooled, params["fc.w"]), params["fc.b"]),
                      (config.n_classes,))


def _cross_entropy(logits: ad.Var, label: int) -> ad.Var:
    probs = ad.softmax(ad.reshape(logits, (1, -1)))
    pick = ad.slice_axis(ad.reshape(probs, (-1,)), 0, label, label + 1)
    return ad.mul(ad.vsum(ad.log(pick)), ad.lift(-1.0))


def train_classifier(
    examples: list[tuple[np.ndarray, int]],
    config: ClassifierConfig,
    rng: Rng,
) -> ParamStore:
    """Cross-entropy training over (sequence, label) pairs."""
    labels = {label for _, label in examples}
    if not labels:
        raise ValueError("no training examples")
    params = init_classifier(config, rng.derive(0))
    order_rng = rng.derive(1)
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(examples))
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            params.zero_grads()
            for j in chunk:
                z, label = examples[int(j)]
                loss = ad.mul(_cross_entropy(_logits(params, config, z), label),
                              ad.lift(1.0 / len(chunk)))
                ad.backward(loss)
            adam_step(params, lr=config.lr)
    return params


def classify(params: ParamStore, config: ClassifierConfig, z: np.ndarray,
             length: int | None = None) -> tuple[int, np.ndarray]:
    """Deterministic inference: predicted label and raw logits."""
    logits = _logits(params, config, z, length=length).value
    return int(np.argmax(logits)), logits


def classification_report(preds, labels, n_classes: int = N_ACTIVITIES) -> dict:
    """Macro precision/recall/F1, accuracy, and row-normalized confusion."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape or preds.size == 0:
        raise ValueError("need matching, non-empty prediction/label arrays")
    confusion = np.zeros((n_classes, n_classes))
    for p, t in zip(preds, labels):
        confusion[t, p] += 1
    present = np.unique(labels)
    precision = np.zeros(n_classes)
    recall = np.zeros(n_classes)
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        precision[c] = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall[c] = tp / (tp + fn) if tp + fn > 0 else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / denom if denom > 0 else 0.0
    row_sums = confusion.sum(axis=1, keepdims=True)
    normalized = np.divide(confusion, row_sums, out=np.zeros_like(confusion),
                           where=row_sums > 0)
    return {
        "accuracy": float((preds == labels).mean()),
        "precision_macro": float(precision[present].mean()),
        "recall_macro": float(recall[present].mean()),
        "f1_macro": float(f1[present].mean()),
        "per_class_precision": precision.tolist(),
        "per_class_recall": recall.tolist(),
        "per_class_f1": f1.tolist(),
        "confusion_normalized": normalized.tolist(),
        "confusion_counts": confusion.astype(int).tolist(),
    }
