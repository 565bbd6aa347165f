"""Desk-scale optimization tasks with analytic gradients and exact oracles.

Two convex objectives stand in for large training workloads so that every
convergence claim can be checked against closed forms or finite
differences: a quadratic with a known minimizer, and binary logistic
regression with an optional ridge term.  Both expose per-instance
gradients (what a worker samples) and exact full-batch loss/gradient (what
the metrics report).  Instances are generated from seeded RNGs and the
objects are immutable after construction.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidParameterError


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-softplus(-z)), stable for large |z|
    return np.exp(-np.logaddexp(0.0, -z))


class Quadratic:
    """f(w; z_i) = 0.5 * ||w - z_i||^2 over n target points.

    The mean objective is 0.5*||w - mean(z)||^2 plus a constant, so the
    minimizer, minimum value, and full gradient are all closed-form and the
    smoothness constant is exactly 1.
    """

    kind = "quadratic"

    def __init__(self, targets: np.ndarray):
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if not np.isfinite(targets).all():
            raise InvalidParameterError("targets must be finite")
        self.targets = targets
        self.n, self.d = targets.shape
        self.center = targets.mean(axis=0)
        # residual term: mean squared spread of targets around their center
        self._floor = 0.5 * float(np.mean(np.sum((targets - self.center) ** 2, axis=1)))

    def sample_gradient(self, w: np.ndarray, i: int) -> np.ndarray:
        return w - self.targets[i]

    def sample_loss(self, w: np.ndarray, i: int) -> float:
        diff = w - self.targets[i]
        return 0.5 * float(diff @ diff)

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        return w - self.center

    def full_loss(self, w: np.ndarray) -> float:
        diff = w - self.center
        return 0.5 * float(diff @ diff) + self._floor

    def smoothness(self) -> float:
        return 1.0

    def optimum(self) -> np.ndarray:
        return self.center.copy()


class Logistic:
    """Binary logistic regression with labels in {-1, +1} and an optional
    ridge term folded into every per-instance loss.

    Per instance: f(w; x, y) = log(1 + exp(-y x.w)) + (l2/2) ||w||^2, so
    the mean loss carries the ridge term exactly once and per-instance
    gradients remain unbiased for the full gradient under uniform sampling
    over all instances.
    """

    kind = "logistic"

    def __init__(self, features: np.ndarray, labels: np.ndarray, l2: float = 0.0,
                 holdout: tuple[np.ndarray, np.ndarray] | None = None):
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.float64).ravel()
        if features.shape[0] != labels.shape[0]:
            raise InvalidParameterError("features and labels disagree on instance count")
        if not set(np.unique(labels)) <= {-1.0, 1.0}:
            raise InvalidParameterError("labels must be -1 or +1")
        if l2 < 0:
            raise InvalidParameterError(f"l2 must be >= 0, got {l2}")
        self.X = features
        self.y = labels
        self.l2 = float(l2)
        self.n, self.d = features.shape
        self.holdout = holdout

    def sample_gradient(self, w: np.ndarray, i: int) -> np.ndarray:
        x = self.X[i]
        z = self.y[i] * float(x @ w)
        return (-self.y[i] * _sigmoid(-z)) * x + self.l2 * w

    def sample_loss(self, w: np.ndarray, i: int) -> float:
        z = self.y[i] * float(self.X[i] @ w)
        return float(np.logaddexp(0.0, -z)) + 0.5 * self.l2 * float(w @ w)

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        z = self.y * (self.X @ w)
        coef = -self.y * _sigmoid(-z)
        return (self.X.T @ coef) / self.n + self.l2 * w

    def full_loss(self, w: np.ndarray) -> float:
        z = self.y * (self.X @ w)
        return float(np.mean(np.logaddexp(0.0, -z))) + 0.5 * self.l2 * float(w @ w)

    def smoothness(self) -> float:
        # 1/4 * max ||x_i||^2 bounds the Hessian of the data term
        return 0.25 * float(np.max(np.sum(self.X**2, axis=1))) + self.l2

    def holdout_accuracy(self, w: np.ndarray) -> float | None:
        if self.holdout is None:
            return None
        hx, hy = self.holdout
        return float(np.mean(np.sign(hx @ w) * hy > 0))


Objective = Quadratic | Logistic


def make_quadratic(n: int, d: int, seed: int, heterogeneity: float = 0.0,
                   shards: int = 1) -> Quadratic:
    """Quadratic task with targets drawn from a standard normal.

    ``heterogeneity`` > 0 shifts each of ``shards`` contiguous blocks of
    instances by a random vector of that magnitude, for exploratory runs
    where per-worker data distributions differ.
    """
    if n < 1 or d < 1:
        raise InvalidParameterError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    targets = rng.standard_normal((n, d))
    if heterogeneity > 0.0:
        targets = _shift_blocks(targets, heterogeneity, shards, rng)
    return Quadratic(targets)


def make_logistic(n: int, d: int, seed: int, separation: float = 2.0, l2: float = 1e-3,
                  heterogeneity: float = 0.0, shards: int = 1,
                  holdout_frac: float = 0.2) -> Logistic:
    """Two-Gaussian binary classification task.

    Features for class y in {-1, +1} are N(y * separation/2 * u, I) with a
    fixed unit direction u, so larger ``separation`` makes the classes
    easier to split.  A held-out set of the same distribution is attached
    for the 0/1 accuracy proxy.
    """
    if n < 2:
        raise InvalidParameterError("n must be >= 2")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)

    def draw(count):
        labels = np.where(rng.random(count) < 0.5, -1.0, 1.0)
        feats = rng.standard_normal((count, d)) + np.outer(labels, 0.5 * separation * direction)
        return feats, labels

    features, labels = draw(n)
    if heterogeneity > 0.0:
        features = _shift_blocks(features, heterogeneity, shards, rng)
    n_hold = max(1, int(round(holdout_frac * n)))
    holdout = draw(n_hold)
    return Logistic(features, labels, l2=l2, holdout=holdout)


def _shift_blocks(data: np.ndarray, magnitude: float, shards: int, rng) -> np.ndarray:
    data = data.copy()
    for k, block in enumerate(np.array_split(np.arange(data.shape[0]), shards)):
        offset = rng.standard_normal(data.shape[1])
        offset *= magnitude / max(np.linalg.norm(offset), 1e-12)
        data[block] += offset
    return data


def partition_uniform(n: int, m: int, seed) -> list[np.ndarray]:
    """Random split of {0..n-1} into m disjoint shards with sizes differing
    by at most one.  Same seed, same partition.  ``seed`` is anything
    ``np.random.default_rng`` accepts."""
    if n < m:
        raise ConfigError([f"instance count must be at least worker count, got n={n} < m={m}"])
    if m < 1:
        raise ConfigError([f"worker count must be >= 1, got m={m}"])
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(shard) for shard in np.array_split(perm, m)]


def partition_contiguous(n: int, m: int) -> list[np.ndarray]:
    """Contiguous blocks, used when per-shard distribution shifts must line
    up with the generator's blocks."""
    if n < m:
        raise ConfigError([f"instance count must be at least worker count, got n={n} < m={m}"])
    return list(np.array_split(np.arange(n), m))


# ---------------------------------------------------------------------------
# Dataset round-trip, one instance per row
# ---------------------------------------------------------------------------

def dump_csv(obj: Objective, path: str | Path) -> None:
    path = Path(path)
    if obj.kind == "quadratic":
        header = "quadratic," + ",".join(f"z{j}" for j in range(obj.d))
        np.savetxt(path, obj.targets, delimiter=",", header=header, comments="# ")
    else:
        header = f"logistic l2={obj.l2!r},label," + ",".join(f"x{j}" for j in range(obj.d))
        rows = np.column_stack([obj.y, obj.X])
        np.savetxt(path, rows, delimiter=",", header=header, comments="# ")


def load_csv(path: str | Path) -> Objective:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline()
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if "quadratic" in header:
        return Quadratic(data)
    if "logistic" in header:
        l2 = float(header.split("l2=")[1].split(",")[0])
        return Logistic(data[:, 1:], data[:, 0], l2=l2)
    raise InvalidParameterError(f"unrecognized dataset header in {path}")
