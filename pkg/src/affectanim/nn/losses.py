import numpy as np

PROB_FLOOR = 1e-12


def mse(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every element; returns (loss, d loss / d pred)."""
    pred = np.asarray(pred)
    diff = pred - np.asarray(target, dtype=pred.dtype)
    return float(np.mean(diff.astype(np.float64) ** 2)), (2.0 / diff.size) * diff


def cross_entropy(probs: np.ndarray, onehot: np.ndarray):
    """Categorical cross-entropy of softmax outputs, averaged over the batch.

    The gradient is taken with respect to ``probs``; the softmax layer's
    backward pass turns it into ``(probs - onehot) / batch``.
    """
    probs = np.asarray(probs)
    onehot = np.asarray(onehot, dtype=probs.dtype)
    safe = np.maximum(probs, PROB_FLOOR)
    n = probs.shape[0]
    loss = -float(np.sum(onehot * np.log(safe.astype(np.float64)))) / n
    return loss, -onehot / safe / n


def one_hot(labels, n_classes: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out
