"""Fixed-feature baseline classifiers: closed-form ridge, multinomial
logistic regression, and k-nearest-neighbors.

All three are deterministic functions of their inputs.  Prediction ties
always resolve to the lowest class index; k-NN distance ties resolve to
the lower stored index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ContractError


@dataclass
class RidgeModel:
    weights: np.ndarray  # (d, C)
    bias: np.ndarray  # (C,)
    alpha: float


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: np.ndarray
    l2: float
    iters_run: int
    losses: list[float] = field(default_factory=list, repr=False)


@dataclass
class KnnModel:
    features: np.ndarray
    labels: np.ndarray
    k: int


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _infer_classes(labels: np.ndarray, num_classes: int | None) -> int:
    return int(labels.max()) + 1 if num_classes is None else num_classes


def fit_ridge(
    features: np.ndarray, labels: np.ndarray, alpha: float = 1.0, num_classes: int | None = None
) -> RidgeModel:
    """One-vs-all ridge on one-hot targets.

    Solves the regularized normal equations (X^T X + alpha I) W = X^T Y
    with a symmetric positive-definite factorization.  The intercept is
    not part of the penalized system (so it carries no penalty); it is
    recovered afterwards as mean(Y) - mean(X)^T W.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape[0] < 1:
        raise ContractError("fit_ridge: empty training set")
    if alpha < 0:
        raise ContractError("alpha must be >= 0")
    c = _infer_classes(y, num_classes)
    targets = _one_hot(y, c)
    gram = x.T @ x + alpha * np.eye(x.shape[1])
    rhs = x.T @ targets
    try:
        chol = scipy.linalg.cho_factor(gram)
        weights = scipy.linalg.cho_solve(chol, rhs)
    except scipy.linalg.LinAlgError as e:
        raise ContractError(
            "ridge normal equations are singular; use alpha > 0"
        ) from e
    bias = targets.mean(axis=0) - x.mean(axis=0) @ weights
    return RidgeModel(weights=weights, bias=bias, alpha=alpha)


def logreg_loss_grad(
    x: np.ndarray, targets: np.ndarray, w: np.ndarray, b: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy plus (l2/2)*||W||^2; bias unpenalized."""
    z = x @ w + b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = x.shape[0]
    loss = float(-(targets * logp).sum() / n + 0.5 * l2 * (w**2).sum())
    p = np.exp(logp)
    gw = x.T @ (p - targets) / n + l2 * w
    gb = (p - targets).sum(axis=0) / n
    return loss, gw, gb


def fit_logreg(
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 1e-4,
    max_iters: int = 500,
    tol: float = 1e-6,
    num_classes: int | None = None,
) -> LogisticModel:
    """Full-batch gradient descent with a backtracking step, so the loss
    sequence is monotone non-increasing.  Stops on |delta loss| < tol or
    the iteration cap."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    c = _infer_classes(y, num_classes)
    if x.shape[0] < c:
        raise ContractError(f"fit_logreg: need at least {c} samples, got {x.shape[0]}")
    targets = _one_hot(y, c)
    w = np.zeros((x.shape[1], c))
    b = np.zeros(c)
    step = 1.0
    loss, gw, gb = logreg_loss_grad(x, targets, w, b, l2)
    if not np.isfinite(loss):
        raise ContractError(f"fit_logreg: loss diverged (nan/inf) at step size {step}")
    losses = [loss]
    iters = 0
    for _ in range(max_iters):
        while True:
            w2, b2 = w - step * gw, b - step * gb
            new_loss, gw2, gb2 = logreg_loss_grad(x, targets, w2, b2, l2)
            if not np.isfinite(new_loss):
                raise ContractError(f"fit_logreg: loss diverged (nan/inf) at step size {step}")
            if new_loss <= loss or step < 1e-14:
                break
            step *= 0.5
        iters += 1
        delta = loss - new_loss
        w, b, loss, gw, gb = w2, b2, new_loss, gw2, gb2
        losses.append(loss)
        step *= 1.2
        if abs(delta) < tol:
            break
    return LogisticModel(weights=w, bias=b, l2=l2, iters_run=iters, losses=losses)


def fit_knn(features: np.ndarray, labels: np.ndarray, k: int = 5) -> KnnModel:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if not 1 <= k <= x.shape[0]:
        raise ContractError(f"k {k} outside [1, {x.shape[0]}]")
    return KnnModel(features=x, labels=y, k=k)


def classify(model, queries: np.ndarray) -> np.ndarray:
    """Predicted labels for the query features.

    Linear models take the argmax score; k-NN takes a majority vote over
    the k nearest stored points by Euclidean distance.
    """
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[0] == 0:
        raise ContractError("classify: empty query")
    if isinstance(model, (RidgeModel, LogisticModel)):
        scores = q @ model.weights + model.bias
        return scores.argmax(axis=1)
    if isinstance(model, KnnModel):
        # difference form keeps values identical to a per-pair loop
        d2 = ((q[:, None, :] - model.features[None, :, :]) ** 2).sum(axis=2)
        order = np.argsort(d2, axis=1, kind="stable")[:, : model.k]
        votes = model.labels[order]
        num_classes = int(model.labels.max()) + 1
        out = np.empty(q.shape[0], dtype=np.int64)
        for i in range(q.shape[0]):
            out[i] = np.bincount(votes[i], minlength=num_classes).argmax()
        return out
    raise ContractError(f"unknown model type {type(model).__name__}")


def ridge_residual(model: RidgeModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Relative residual ||(X^T X + alpha I) W - X^T Y|| / ||X^T Y||."""
    x = np.asarray(features, dtype=np.float64)
    c = model.weights.shape[1]
    targets = _one_hot(np.asarray(labels), c)
    lhs = (x.T @ x + model.alpha * np.eye(x.shape[1])) @ model.weights
    rhs = x.T @ targets
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))
