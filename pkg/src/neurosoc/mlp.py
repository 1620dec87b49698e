"""Bias-free ReLU MLP trained with plain numpy SGD.

The converted spiking datapath has no bias term, so the network is
trained without biases from the start.  Training is deterministic given
the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MlpConfig", "MlpModel", "TrainingDiverged", "train_mlp", "accuracy",
           "save_mlp", "load_mlp"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple = (784, 48, 10)
    epochs: int = 8
    lr: float = 0.1
    momentum: float = 0.9
    lr_decay: float = 0.85  # per epoch
    batch_size: int = 100
    seed: int = 1


@dataclass
class MlpModel:
    layer_sizes: tuple
    weights: list = field(default_factory=list)  # per-layer [fan_in, fan_out] float64

    def forward(self, x: np.ndarray) -> list:
        """Activations per layer: ReLU on hidden layers, raw logits last."""
        acts = []
        h = x
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = h @ w
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x)[-1], axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def accuracy(model: MlpModel, pixels: np.ndarray, labels: np.ndarray) -> float:
    return float((model.predict(pixels) == labels).mean())


def train_mlp(pixels: np.ndarray, labels: np.ndarray, config: MlpConfig,
              test_pixels: np.ndarray | None = None,
              test_labels: np.ndarray | None = None,
              log=None) -> tuple[MlpModel, dict]:
    """Train; returns (model, report with per-epoch loss/accuracy)."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    sizes = config.layer_sizes
    model = MlpModel(sizes, [
        rng.normal(0.0, np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1]))
        for i in range(len(sizes) - 1)
    ])
    velocity = [np.zeros_like(w) for w in model.weights]
    n = pixels.shape[0]
    report = {"epoch_loss": [], "train_acc": [], "test_acc": []}
    lr = config.lr
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            x = pixels[idx]
            y = labels[idx]
            acts = model.forward(x)
            probs = _softmax(acts[-1])
            batch = x.shape[0]
            loss = -np.log(probs[np.arange(batch), y] + 1e-12).mean()
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"NaN/inf loss at epoch {epoch}, batch offset {lo} (lr={lr:g})"
                )
            losses.append(loss)
            grad = probs
            grad[np.arange(batch), y] -= 1.0
            grad /= batch
            for layer in range(len(model.weights) - 1, -1, -1):
                inp = x if layer == 0 else acts[layer - 1]
                dw = inp.T @ grad
                if layer > 0:
                    grad = (grad @ model.weights[layer].T) * (acts[layer - 1] > 0)
                velocity[layer] = config.momentum * velocity[layer] - lr * dw
                model.weights[layer] += velocity[layer]
        report["epoch_loss"].append(float(np.mean(losses)))
        if test_pixels is not None:
            report["test_acc"].append(accuracy(model, test_pixels, test_labels))
        if log:
            tail = f" test_acc={report['test_acc'][-1]:.4f}" if test_pixels is not None else ""
            log(f"epoch {epoch}: loss={report['epoch_loss'][-1]:.4f}{tail}")
        lr *= config.lr_decay
    report["train_acc"].append(accuracy(model, pixels, labels))
    return model, report


def save_mlp(path, model: MlpModel):
    arrays = {f"W{i}": w for i, w in enumerate(model.weights)}
    np.savez(path, layer_sizes=np.array(model.layer_sizes), **arrays)


def load_mlp(path) -> MlpModel:
    blob = np.load(path)
    sizes = tuple(int(s) for s in blob["layer_sizes"])
    weights = [blob[f"W{i}"] for i in range(len(sizes) - 1)]
    return MlpModel(sizes, weights)
