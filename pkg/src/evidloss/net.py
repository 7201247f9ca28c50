"""Toy evidential classifier: 2-H-H-C MLP with a rectifier-plus-one head,
manual backpropagation for every loss kind, Adam, and a deterministic training loop."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import gradients, losses, metrics
from .dirichlet import (
    DirichletParams,
    SimplexVector,
    aleatoric_uncertainty,
    epistemic_uncertainty,
    mean_probability,
)
from .losses import LossConfig
from .specfn import trigamma

MODEL_VERSION = "evidloss-model-v1"

LOSS_KINDS = (
    "uce_ent",
    "ufce",
    "ufce_eus_er",
    "uce_eus_er",
    "ce",
    "focal",
    "energy_bounded_ce",
    "energy_bounded_focal",
)
EVIDENTIAL_KINDS = ("uce_ent", "ufce", "ufce_eus_er", "uce_eus_er")
OOD_EXPOSED_KINDS = ("ufce_eus_er", "uce_eus_er", "energy_bounded_ce", "energy_bounded_focal")

_PROB_CLAMP = 1e-12
_POSITIVE_CLASS = 0


class SaturationWarning(RuntimeWarning):
    """Every head logit in a batch is nonpositive, so no gradient reaches the evidence."""


@dataclass
class MlpModel:
    """Weights and biases of the fixed 2 -> H -> H -> C architecture."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def initialized(cls, hidden_size: int, n_classes: int, rng: np.random.Generator,
                    n_inputs: int = 2) -> "MlpModel":
        sizes = [n_inputs, hidden_size, hidden_size, n_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, hidden_size: int, n_classes: int, n_inputs: int = 2) -> "MlpModel":
        sizes = [n_inputs, hidden_size, hidden_size, n_classes]
        return cls(
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden_size(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward_batch(self, x: np.ndarray) -> dict[str, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z1 = x @ self.weights[0] + self.biases[0]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.weights[1] + self.biases[1]
        a2 = np.maximum(z2, 0.0)
        logits = a2 @ self.weights[2] + self.biases[2]
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError("non-finite activations in the forward pass")
        return {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "logits": logits,
                "alpha": np.maximum(logits, 0.0) + 1.0}

    def predict_uncertainties_batch(self, x: np.ndarray) -> dict[str, np.ndarray]:
        cache = self.forward_batch(x)
        logits = cache["logits"]
        alpha = cache["alpha"]
        alpha0 = alpha.sum(axis=1)
        p_bar = alpha / alpha0[:, None]
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        z = exp.sum(axis=1)
        p_softmax = exp / z[:, None]
        entropy = np.log(z) - (exp * shifted).sum(axis=1) / z
        energy = -logits.max(axis=1) - np.log(z)
        return {
            "logits": logits,
            "alpha": alpha,
            "p_bar": p_bar,
            "p_softmax": p_softmax,
            "u_alea": -p_bar.max(axis=1),
            "u_epis": self.n_classes / alpha0,
            "energy": energy,
            "softmax_entropy": entropy,
        }

    def to_json_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "architecture": {
                "n_inputs": self.weights[0].shape[0],
                "hidden_size": self.hidden_size,
                "n_classes": self.n_classes,
            },
            "layers": [
                {"weight": w.tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"corrupt model file {path}: {exc}") from None
        if not isinstance(data, dict) or data.get("version") != MODEL_VERSION:
            raise ValueError(
                f"unsupported model version {data.get('version') if isinstance(data, dict) else None!r}, "
                f"expected {MODEL_VERSION!r}"
            )
        layers = data["layers"]
        return cls(
            [np.asarray(layer["weight"], dtype=float) for layer in layers],
            [np.asarray(layer["bias"], dtype=float) for layer in layers],
        )


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "ufce_eus_er"
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 1e-3
    weight_decay: float = 1e-7
    batch_size: int = 128
    epochs: int = 50
    hidden_size: int = 64
    seed: int = 7

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1 or self.hidden_size < 1:
            raise ValueError("batch_size and hidden_size must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")


def forward(model: MlpModel, x: Sequence[float]) -> tuple[list[float], DirichletParams]:
    """Single-point forward pass: raw logits plus the implied concentrations."""
    cache = model.forward_batch(np.asarray(x, dtype=float).reshape(1, -1))
    logits = cache["logits"][0]
    return logits.tolist(), DirichletParams(tuple(cache["alpha"][0]))


def predict_uncertainties(
    model: MlpModel, x: Sequence[float], temperature: float = 1.0
) -> tuple[SimplexVector, float, float, float, float]:
    """All five scores from one forward pass: mean probability, aleatoric and
    epistemic uncertainty, energy, and softmax entropy."""
    logits, alpha = forward(model, x)
    return (
        mean_probability(alpha),
        aleatoric_uncertainty(alpha),
        epistemic_uncertainty(alpha),
        losses.energy_score(logits, temperature),
        losses.softmax_entropy(logits),
    )


def _ent_grad(d: DirichletParams) -> list[float]:
    """Gradient of the flat-prior KL with respect to each concentration."""
    a0 = d.alpha0
    tail = (a0 - d.n_classes) * trigamma(a0)
    return [(a - 1.0) * trigamma(a) - tail for a in d.alpha]


def _evidential_sample(alpha_row: np.ndarray, label: int, kind: str, cfg: LossConfig):
    d = DirichletParams(tuple(alpha_row))
    if kind == "uce_ent":
        value = losses.uce(d, label)
        grad = gradients.uce_grad_alpha(d, label)
        if cfg.beta:
            value += cfg.beta * losses.ent_regularizer(d)
            grad = [g + cfg.beta * e for g, e in zip(grad, _ent_grad(d))]
        return value, grad
    if kind == "ufce":
        return losses.ufce(d, label, cfg.gamma), gradients.ufce_grad_alpha(d, label, cfg.gamma)
    # evidence-scaled variants: the multiplier is frozen (no gradient through alpha0)
    gamma = cfg.gamma if kind == "ufce_eus_er" else 0.0
    w = losses.eus_multiplier(d.alpha0, d.n_classes, cfg.xi)
    value = w * losses.ufce(d, label, gamma)
    grad = [w * g for g in gradients.ufce_grad_alpha(d, label, gamma)]
    return value, grad


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def backward(
    model: MlpModel,
    points: Sequence,
    loss_kind: str,
    cfg: LossConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and exact parameter gradients via the chain rule.

    The rectifier subgradient is 0 at 0, so a fully nonpositive head yields a
    zero evidence gradient (reported as a saturation warning). Points carry
    (x, label, role); pseudo-OOD points contribute only to the exposure terms.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    if not points:
        raise ValueError("batch must be nonempty")
    x = np.asarray([p.x for p in points], dtype=float)
    roles = np.asarray([p.role for p in points])
    labels = np.asarray([p.label for p in points], dtype=int)
    id_mask = roles == "ID"
    ood_mask = ~id_mask
    n_id = int(id_mask.sum())
    n_ood = int(ood_mask.sum())
    exposure = loss_kind in OOD_EXPOSED_KINDS
    if n_id == 0 and not (exposure and n_ood):
        raise ValueError("batch contains no ID samples")

    cache = model.forward_batch(x)
    logits = cache["logits"]
    n, n_classes = logits.shape
    d_logits = np.zeros_like(logits)
    total = 0.0

    def sample_weight(label: int) -> float:
        return cfg.positive_class_weight if label == _POSITIVE_CLASS else 1.0

    if loss_kind in EVIDENTIAL_KINDS:
        alpha = cache["alpha"]
        d_alpha = np.zeros_like(alpha)
        for i in np.flatnonzero(id_mask):
            w = sample_weight(labels[i]) / n_id
            value, grad = _evidential_sample(alpha[i], int(labels[i]), loss_kind, cfg)
            total += w * value
            d_alpha[i] = np.asarray(grad) * w
        if exposure and n_ood:
            scale = cfg.lambda_ / n_ood
            for i in np.flatnonzero(ood_mask):
                d = DirichletParams(tuple(alpha[i]))
                total += scale * losses.er_loss(d)
                d_alpha[i] = np.asarray(_ent_grad(d)) * scale
        if np.all(logits <= 0.0):
            warnings.warn(
                "evidential head saturated: all logits nonpositive, zero gradient through the evidence",
                SaturationWarning,
                stacklevel=2,
            )
        d_logits = d_alpha * (logits > 0.0)
    else:
        probs = _softmax_rows(logits)
        gamma = cfg.gamma if loss_kind in ("focal", "energy_bounded_focal") else 0.0
        for i in np.flatnonzero(id_mask):
            c = int(labels[i])
            w = sample_weight(c) / n_id
            pc = probs[i, c]
            pc_safe = max(pc, _PROB_CLAMP)
            one_minus = 1.0 - pc
            # a = (dl/dp_c) p_c stays finite at both saturation ends; the chain
            # through softmax is then dl/ds_j = a (delta_cj - p_j)
            if gamma == 0.0:
                total += w * -math.log(pc_safe)
                a = -1.0
            elif one_minus <= 0.0:
                a = 0.0
            else:
                total += w * one_minus**gamma * -math.log(pc_safe)
                a = gamma * pc * one_minus ** (gamma - 1.0) * math.log(pc_safe) - one_minus**gamma
            row = -a * probs[i]
            row[c] += a
            d_logits[i] += w * row
        if loss_kind in ("energy_bounded_ce", "energy_bounded_focal"):
            t = cfg.temperature
            shifted = logits / t
            shifted -= shifted.max(axis=1, keepdims=True)
            soft_t = np.exp(shifted)
            soft_t /= soft_t.sum(axis=1, keepdims=True)
            energies = np.array(
                [losses.energy_score(logits[i], t) for i in range(n)]
            )
            eta = losses.ENERGY_BOUND_WEIGHT
            penalty = 0.0
            if n_id:
                viol = np.maximum(0.0, energies[id_mask] - cfg.m_in)
                penalty += float((viol**2).mean())
                coef = 2.0 * viol / n_id
                d_logits[id_mask] += eta * coef[:, None] * -soft_t[id_mask]
            if n_ood:
                viol = np.maximum(0.0, cfg.m_out - energies[ood_mask])
                penalty += float((viol**2).mean())
                coef = -2.0 * viol / n_ood
                d_logits[ood_mask] += eta * coef[:, None] * -soft_t[ood_mask]
            total += eta * penalty

    grads: dict[str, np.ndarray] = {}
    d_z = d_logits
    grads["w3"] = cache["a2"].T @ d_z
    grads["b3"] = d_z.sum(axis=0)
    d_a2 = d_z @ model.weights[2].T
    d_z2 = d_a2 * (cache["z2"] > 0.0)
    grads["w2"] = cache["a1"].T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_a1 = d_z2 @ model.weights[1].T
    d_z1 = d_a1 * (cache["z1"] > 0.0)
    grads["w1"] = cache["x"].T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return float(total), grads


class AdamOptimizer:
    """Adam with additive weight decay, matching the reference constants."""

    def __init__(self, learning_rate: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.wd = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for key, p in params.items():
            g = grads[key] + self.wd * p
            m = self.m.setdefault(key, np.zeros_like(p))
            v = self.v.setdefault(key, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _named_params(model: MlpModel) -> dict[str, np.ndarray]:
    return {
        "w1": model.weights[0], "w2": model.weights[1], "w3": model.weights[2],
        "b1": model.biases[0], "b2": model.biases[1], "b3": model.biases[2],
    }


def train(cfg: TrainConfig, split) -> tuple[MlpModel, list[dict]]:
    """Mini-batch Adam training; pseudo-OOD exposure only for ER/energy-bounded kinds.

    Deterministic given cfg.seed: the seed drives both initialization and the
    per-epoch shuffles.
    """
    id_points = [p for p in split.train if p.role == "ID"]
    if not id_points:
        raise ValueError("training split has no ID points")
    n_classes = max(p.label for p in id_points) + 1
    if n_classes < 2:
        raise ValueError("need at least 2 classes in the training data")
    points = list(id_points)
    if cfg.loss_kind in OOD_EXPOSED_KINDS:
        points += [p for p in split.train if p.role != "ID"]

    init_rng = np.random.default_rng((cfg.seed, 0))
    model = MlpModel.initialized(cfg.hidden_size, n_classes, init_rng)
    shuffle_rng = np.random.default_rng((cfg.seed, 1))
    optim = AdamOptimizer(cfg.learning_rate, cfg.weight_decay)

    val_id = [p for p in split.val if p.role == "ID"]
    history: list[dict] = []
    n = len(points)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = [points[i] for i in order[start : start + cfg.batch_size]]
            try:
                loss_value, grads = backward(model, batch, cfg.loss_kind, cfg.loss)
            except FloatingPointError as exc:
                raise RuntimeError(
                    f"training diverged at epoch {epoch}, batch {start // cfg.batch_size}: {exc}"
                ) from None
            if not math.isfinite(loss_value):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}, batch {start // cfg.batch_size}: "
                    f"loss={loss_value!r}"
                )
            optim.step(_named_params(model), grads)
            batch_losses.append(loss_value)
        row = {"epoch": epoch, "train_loss": float(np.mean(batch_losses))}
        if val_id:
            preds = model.predict_uncertainties_batch(np.asarray([p.x for p in val_id]))
            probs = preds["p_bar"] if cfg.loss_kind in EVIDENTIAL_KINDS else preds["p_softmax"]
            y = np.asarray([p.label for p in val_id])
            correct = probs.argmax(axis=1) == y
            row["val_acc"] = float(correct.mean())
            row["val_ece"] = metrics.ece(probs.max(axis=1), correct, n_bins=10)
        history.append(row)
    return model, history
