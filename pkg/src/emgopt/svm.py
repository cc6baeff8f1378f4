"""Soft-margin RBF-kernel SVM trained by sequential minimal optimization.

The binary solver maximizes the standard dual

    max_a  sum(a) - 0.5 * sum_ij a_i a_j t_i t_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,   sum_i a_i t_i = 0

with two-coordinate updates on the maximal violating pair, deterministic
tie-breaking, and an update cap. Multi-class prediction wraps eight binary
models one-vs-rest and picks the class with the highest confidence score
(signed decision value).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import MovementClass

MAX_PAIR_UPDATES = 1_000_000
_BOUND_SNAP = 1e-10
_ETA_FLOOR = 1e-12


class ConvergenceError(RuntimeError):
    """SMO hit the update cap before reaching the requested KKT tolerance."""

    def __init__(self, message: str, kkt_violation: float, updates: int):
        super().__init__(message)
        self.kkt_violation = kkt_violation
        self.updates = updates


@dataclass(frozen=True)
class SvmHyperparams:
    c: float
    gamma: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"C must be positive and finite, got {self.c}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass
class BinarySvmModel:
    support_vectors: np.ndarray  # [n_sv, D]
    dual_coeffs: np.ndarray      # alpha_i * t_i per support vector
    bias: float
    positive_class: MovementClass | int
    hyperparams: SvmHyperparams

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[0]


@dataclass
class OvrModel:
    binaries: list[BinarySvmModel]  # one per class, in C1..C8 order
    classes: list[MovementClass] = field(default_factory=lambda: list(MovementClass))

    @property
    def dim(self) -> int:
        return self.binaries[0].support_vectors.shape[1]


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2); 1.0 at zero distance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel matrix [len(A), len(B)]."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class _KernelRows:
    """On-demand RBF Gram rows with a FIFO-capped cache."""

    def __init__(self, X: np.ndarray, gamma: float, cache_bytes: float = 256e6):
        self.X = X
        self.gamma = gamma
        self.sq = np.sum(X * X, axis=1)
        self.cache: dict[int, np.ndarray] = {}
        self.max_rows = max(2, int(cache_bytes // (8 * max(X.shape[0], 1))))

    def row(self, i: int) -> np.ndarray:
        cached = self.cache.get(i)
        if cached is not None:
            return cached
        d = self.sq + self.sq[i] - 2.0 * (self.X @ self.X[i])
        np.maximum(d, 0.0, out=d)
        r = np.exp(-self.gamma * d)
        if len(self.cache) >= self.max_rows:
            self.cache.pop(next(iter(self.cache)))
        self.cache[i] = r
        return r


def train_binary(X: np.ndarray, t: np.ndarray, hp: SvmHyperparams,
                 tol: float = 1e-3,
                 max_updates: int = MAX_PAIR_UPDATES) -> BinarySvmModel:
    """Solve the soft-margin dual for labels t in {-1, +1}.

    Stops when the maximal KKT violating pair's gap drops to tol. The bias
    averages t_i - f0(x_i) over free support vectors (0 < alpha < C); if none
    exist it falls back to the midpoint of the final violation bracket.
    """
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if X.ndim != 2 or t.shape != (X.shape[0],):
        raise ValueError("X must be [n, D] with one label per row")
    if not (tol > 0):
        raise ValueError(f"tol must be positive, got {tol}")
    if not (np.any(t > 0) and np.any(t < 0)):
        raise ValueError("training set must contain both label signs")
    if not np.all(np.abs(t) == 1.0):
        raise ValueError("labels must be -1 or +1")

    n = X.shape[0]
    C = hp.c
    kernel = _KernelRows(X, hp.gamma)
    alpha = np.zeros(n)
    F = -t.copy()  # F_i = sum_j a_j t_j K_ij - t_i
    pos = t > 0

    # masked-selection penalties, maintained incrementally: only the two
    # updated coordinates can change I_up / I_low membership
    pen_up = np.where(pos, 0.0, np.inf)   # alpha = 0: +1 labels can move up
    pen_lo = np.where(pos, np.inf, 0.0)
    buf = np.empty(n)

    def refresh_membership(idx: int) -> None:
        a = alpha[idx]
        if pos[idx]:
            pen_up[idx] = 0.0 if a < C else np.inf
            pen_lo[idx] = 0.0 if a > 0.0 else np.inf
        else:
            pen_up[idx] = 0.0 if a > 0.0 else np.inf
            pen_lo[idx] = 0.0 if a < C else np.inf

    updates = 0
    stalls = 0
    while True:
        np.add(F, pen_up, out=buf)
        i_up = int(buf.argmin())
        b_up = buf[i_up]
        np.subtract(F, pen_lo, out=buf)
        i_lo = int(buf.argmax())
        b_low = buf[i_lo]
        gap = b_low - b_up
        if gap <= tol:
            break
        if updates >= max_updates or stalls >= 64:
            raise ConvergenceError(
                f"SMO did not reach tol={tol} after {updates} pair updates "
                f"(KKT violation {gap / 2.0:.3e})",
                kkt_violation=gap / 2.0, updates=updates)

        i, j = i_up, i_lo
        k_i = kernel.row(i)
        k_j = kernel.row(j)
        eta = max(k_i[i] + k_j[j] - 2.0 * k_i[j], _ETA_FLOOR)
        if t[i] != t[j]:
            L = max(0.0, alpha[j] - alpha[i])
            H = min(C, C + alpha[j] - alpha[i])
        else:
            L = max(0.0, alpha[i] + alpha[j] - C)
            H = min(C, alpha[i] + alpha[j])
        a_j_new = alpha[j] + t[j] * (F[i] - F[j]) / eta
        a_j_new = min(max(a_j_new, L), H)
        a_j_new = _snap(a_j_new, C)
        d_j = a_j_new - alpha[j]
        a_i_new = alpha[i] + t[i] * t[j] * (alpha[j] - a_j_new)
        a_i_new = _snap(a_i_new, C)
        d_i = a_i_new - alpha[i]
        if max(abs(d_i), abs(d_j)) < 1e-14 * max(1.0, C):
            stalls += 1
            continue
        stalls = 0
        alpha[i] = a_i_new
        alpha[j] = a_j_new
        F += (t[i] * d_i) * k_i
        F += (t[j] * d_j) * k_j
        refresh_membership(i)
        refresh_membership(j)
        updates += 1

    sv = alpha > 0.0
    free = sv & (alpha < C)
    if np.any(free):
        bias = float(np.mean(-F[free]))
    else:
        bias = float(-(b_up + b_low) / 2.0)
    return BinarySvmModel(
        support_vectors=X[sv].copy(),
        dual_coeffs=(alpha[sv] * t[sv]).copy(),
        bias=bias,
        positive_class=0,
        hyperparams=hp,
    )


def _snap(a: float, C: float) -> float:
    snap = _BOUND_SNAP * max(1.0, C)
    if a < snap:
        return 0.0
    if a > C - snap:
        return C
    return a


def dual_objective(alpha: np.ndarray, X: np.ndarray, t: np.ndarray,
                   gamma: float) -> float:
    """Dual objective value sum(a) - 0.5 a^T Q a with Q = (t t^T) * K."""
    K = rbf_kernel_matrix(X, X, gamma)
    at = alpha * t
    return float(np.sum(alpha) - 0.5 * at @ K @ at)


def model_dual_variables(model: BinarySvmModel, X: np.ndarray) -> np.ndarray:
    """Recover the full-length alpha vector by matching support vector rows."""
    alpha = np.zeros(X.shape[0])
    used = np.zeros(model.n_support, dtype=bool)
    for row in range(X.shape[0]):
        for k in range(model.n_support):
            if not used[k] and np.array_equal(model.support_vectors[k], X[row]):
                alpha[row] = abs(model.dual_coeffs[k])
                used[k] = True
                break
    return alpha


def decision_value(model: BinarySvmModel, x: np.ndarray) -> float:
    """Signed confidence score: sum_j (a_j t_j) K(sv_j, x) + bias."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.support_vectors.shape[1],):
        raise ValueError(
            f"dimension mismatch: expected {model.support_vectors.shape[1]}, "
            f"got {x.shape}")
    k = rbf_kernel_matrix(model.support_vectors, x[None, :], model.hyperparams.gamma)
    return float(model.dual_coeffs @ k[:, 0] + model.bias)


def decision_values(model: BinarySvmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    k = rbf_kernel_matrix(model.support_vectors, X, model.hyperparams.gamma)
    return model.dual_coeffs @ k + model.bias


def train_ovr(X: np.ndarray, y: Sequence[MovementClass], hp: SvmHyperparams,
              tol: float = 1e-3) -> OvrModel:
    """Train one binary per class (positive = that class) with shared hyperparams."""
    y = list(y)
    present = set(y)
    missing = [c.name for c in MovementClass if c not in present]
    if missing:
        raise ValueError(f"absent classes: {missing}")
    X = np.asarray(X, dtype=np.float64)
    binaries = []
    for cls in MovementClass:
        t = np.array([1.0 if label is cls else -1.0 for label in y])
        model = train_binary(X, t, hp, tol=tol)
        model.positive_class = cls
        binaries.append(model)
    return OvrModel(binaries=binaries)


def predict(ovr: OvrModel, x: np.ndarray) -> MovementClass:
    """Argmax of the eight confidence scores; ties go to the lowest class index."""
    scores = [decision_value(b, x) for b in ovr.binaries]
    return ovr.classes[int(np.argmax(scores))]


def predict_batch(ovr: OvrModel, X: np.ndarray) -> list[MovementClass]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    scores = np.stack([decision_values(b, X) for b in ovr.binaries])  # [8, n]
    winners = np.argmax(scores, axis=0)
    return [ovr.classes[int(w)] for w in winners]


def ovr_to_json(ovr: OvrModel) -> str:
    doc = {
        "class_order": [c.name for c in ovr.classes],
        "binaries": [
            {
                "positive_class": b.positive_class.name,
                "c": b.hyperparams.c,
                "gamma": b.hyperparams.gamma,
                "bias": b.bias,
                "dual_coeffs": [float(v) for v in b.dual_coeffs],
                "support_vectors": [[float(v) for v in row] for row in b.support_vectors],
            }
            for b in ovr.binaries
        ],
    }
    return json.dumps(doc, sort_keys=True)


def ovr_from_json(text: str) -> OvrModel:
    doc = json.loads(text)
    classes = [MovementClass[name] for name in doc["class_order"]]
    binaries = []
    for b in doc["binaries"]:
        binaries.append(BinarySvmModel(
            support_vectors=np.array(b["support_vectors"], dtype=np.float64),
            dual_coeffs=np.array(b["dual_coeffs"], dtype=np.float64),
            bias=float(b["bias"]),
            positive_class=MovementClass[b["positive_class"]],
            hyperparams=SvmHyperparams(c=float(b["c"]), gamma=float(b["gamma"])),
        ))
    return OvrModel(binaries=binaries, classes=classes)
