"""Mixture of MLP experts with an MLP + softmax gate, trained online.

Shapes (``d`` inputs, ``C`` classes, ``N`` experts, ``H`` expert hidden
units, ``G`` gate hidden units); every layer carries a bias column that
multiplies a constant 1 appended to its input:

* ``omega`` (N, H, d+1)  expert input -> hidden
* ``w``     (N, C, H+1)  expert hidden -> output
* ``xi``    (G, d+1)     gate input -> hidden
* ``zeta``  (N, G+1)     gate hidden -> output (``tau``)

All units are logistic sigmoids; the gate applies a softmax to ``tau``.
Per-sample updates descend the negative log-likelihood
``J = -log sum_i g_i exp(-|y - O_i|^2 / 2)``::

    w_i     += eta_e * h_i (y - O_i) O_i (1 - O_i)  [v_i, 1]^T
    omega_i += eta_e * (w_i^T delta_i) v_i (1 - v_i) [x, 1]^T
    zeta    += eta_g * (h - g) tau (1 - tau) [theta, 1]^T
    xi      += eta_g * (zeta^T delta_tau) theta (1 - theta) [x, 1]^T

where ``h`` is the posterior responsibility of each expert for ``y``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import modelio
from ._jit import njit, pick

N_CLASSES = 5


@dataclass(frozen=True)
class TrainConfig:
    eta_e: float = 0.9
    eta_g: float = 0.4
    epochs: int = 300
    n_experts: int = 3
    hidden: int = 20
    gate_hidden: int = 40
    seed: int = 0

    def __post_init__(self):
        if not (self.eta_e >= 0 and self.eta_g >= 0):
            raise ValueError("learning rates must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class MoEModel:
    omega: np.ndarray
    w: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray

    @property
    def n_experts(self) -> int:
        return self.w.shape[0]

    @property
    def n_in(self) -> int:
        return self.xi.shape[1] - 1

    @property
    def n_out(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "MoEModel":
        return MoEModel(*(a.copy() for a in self.arrays()))

    def arrays(self):
        return (self.omega, self.w, self.xi, self.zeta, self.x_mean, self.x_scale)


def init_model(
    n_in: int = 17,
    n_out: int = N_CLASSES,
    n_experts: int = 3,
    hidden: int = 20,
    gate_hidden: int = 40,
    seed=0,
) -> MoEModel:
    """Weights uniform in [-0.5, 0.5]."""
    if n_experts < 1:
        raise ValueError("need at least one expert")
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-0.5, 0.5, size=shape)

    return MoEModel(
        omega=u(n_experts, hidden, n_in + 1),
        w=u(n_experts, n_out, hidden + 1),
        xi=u(gate_hidden, n_in + 1),
        zeta=u(n_experts, gate_hidden + 1),
        x_mean=np.zeros(n_in),
        x_scale=np.ones(n_in),
    )


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def softmax(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(t - t.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _aug(v):
    return np.append(v, 1.0)


def _input(model: MoEModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_in:
        raise ValueError(f"expected {model.n_in} inputs, got {x.shape[-1]}")
    return (x - model.x_mean) / model.x_scale


def _forward_parts(model: MoEModel, xs: np.ndarray):
    xa = _aug(xs)
    v = sigmoid(model.omega @ xa)  # (N, H)
    va = np.concatenate([v, np.ones((v.shape[0], 1))], axis=1)
    O = sigmoid(np.einsum("ich,ih->ic", model.w, va))  # (N, C)
    theta = sigmoid(model.xi @ xa)
    tau = sigmoid(model.zeta @ _aug(theta))
    g = softmax(tau)
    return xa, v, va, O, theta, tau, g


def gate_outputs(model: MoEModel, x) -> np.ndarray:
    """Pre-softmax gate outputs ``tau``."""
    return _forward_parts(model, _input(model, x))[5]


def gate(model: MoEModel, x) -> np.ndarray:
    return _forward_parts(model, _input(model, x))[6]


def mix(O, g) -> np.ndarray:
    """Mixed output ``T = sum_i g_i O_i`` for expert outputs ``O`` (N, C)."""
    return np.asarray(g, dtype=np.float64) @ np.asarray(O, dtype=np.float64)


def forward(model: MoEModel, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(T, O, g)`` with ``T = sum_i g_i O_i``."""
    _, _, _, O, _, _, g = _forward_parts(model, _input(model, x))
    return mix(O, g), O, g


def forward_batch(model: MoEModel, X) -> np.ndarray:
    """Mixed outputs ``T`` for a batch, shape (n, C)."""
    Xs = _input(model, np.atleast_2d(X))
    Xa = np.concatenate([Xs, np.ones((Xs.shape[0], 1))], axis=1)
    v = sigmoid(np.einsum("ehd,nd->neh", model.omega, Xa))
    va = np.concatenate([v, np.ones(v.shape[:2] + (1,))], axis=2)
    O = sigmoid(np.einsum("ech,neh->nec", model.w, va))
    theta = sigmoid(Xa @ model.xi.T)
    ta = np.concatenate([theta, np.ones((theta.shape[0], 1))], axis=1)
    g = softmax(sigmoid(ta @ model.zeta.T))
    return np.einsum("ne,nec->nc", g, O)


def responsibilities(O, g, y) -> np.ndarray:
    """``h_i = g_i exp(-|y-O_i|^2/2) / sum_j g_j exp(-|y-O_j|^2/2)``."""
    y = np.asarray(y, dtype=np.float64)
    logl = np.log(np.maximum(g, 1e-300)) - 0.5 * np.sum((y - O) ** 2, axis=1)
    return softmax(logl)


def posterior(model: MoEModel, x, y) -> np.ndarray:
    _, O, g = forward(model, x)
    return responsibilities(O, g, y)


def objective(model: MoEModel, x, y) -> float:
    """Negative log-likelihood ``J`` of target ``y`` under the mixture."""
    _, O, g = forward(model, x)
    logl = np.log(g) - 0.5 * np.sum((np.asarray(y, dtype=np.float64) - O) ** 2, axis=1)
    m = logl.max()
    return -float(m + np.log(np.sum(np.exp(logl - m))))


def updates(model: MoEModel, x, y, cfg: TrainConfig = TrainConfig()) -> dict[str, np.ndarray]:
    """Weight increments for one sample, keyed by layer name."""
    y = np.asarray(y, dtype=np.float64)
    xa, v, va, O, theta, tau, g = _forward_parts(model, _input(model, x))
    h = responsibilities(O, g, y)
    d_out = h[:, None] * (y - O) * O * (1.0 - O)  # (N, C)
    d_hid = np.einsum("ich,ic->ih", model.w[:, :, :-1], d_out) * v * (1.0 - v)
    d_tau = (h - g) * tau * (1.0 - tau)
    d_theta = (model.zeta[:, :-1].T @ d_tau) * theta * (1.0 - theta)
    return {
        "w": cfg.eta_e * d_out[:, :, None] * va[:, None, :],
        "omega": cfg.eta_e * d_hid[:, :, None] * xa[None, None, :],
        "zeta": cfg.eta_g * np.outer(d_tau, _aug(theta)),
        "xi": cfg.eta_g * np.outer(d_theta, xa),
    }


_LAYERS = ("w", "omega", "zeta", "xi")


def train_step(model: MoEModel, x, y, cfg: TrainConfig = TrainConfig()) -> MoEModel:
    """Return a new model after one online update on ``(x, y)``."""
    new = model.copy()
    for name, delta in updates(model, x, y, cfg).items():
        arr = getattr(new, name)
        arr += delta
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite weights in layer {name!r}")
    return new


# --- epoch kernels ------------------------------------------------------------


@njit
def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


@njit
def _epoch_numba(omega, w, xi, zeta, Xs, Y, order, eta_e, eta_g):
    N, H, D1 = omega.shape
    C = w.shape[1]
    G = xi.shape[0]
    xa = np.empty(D1)
    v = np.empty((N, H))
    O = np.empty((N, C))
    theta = np.empty(G)
    tau = np.empty(N)
    g = np.empty(N)
    h = np.empty(N)
    d_out = np.empty(C)
    d_hid = np.empty(H)
    d_tau = np.empty(N)
    d_theta = np.empty(G)
    for idx in range(order.shape[0]):
        s = order[idx]
        for j in range(D1 - 1):
            xa[j] = Xs[s, j]
        xa[D1 - 1] = 1.0
        y = Y[s]
        for i in range(N):
            for k in range(H):
                acc = 0.0
                for j in range(D1):
                    acc += omega[i, k, j] * xa[j]
                v[i, k] = _sig(acc)
            for c in range(C):
                acc = w[i, c, H]
                for k in range(H):
                    acc += w[i, c, k] * v[i, k]
                O[i, c] = _sig(acc)
        for k in range(G):
            acc = 0.0
            for j in range(D1):
                acc += xi[k, j] * xa[j]
            theta[k] = _sig(acc)
        for i in range(N):
            acc = zeta[i, G]
            for k in range(G):
                acc += zeta[i, k] * theta[k]
            tau[i] = _sig(acc)
        m = tau.max()
        tot = 0.0
        for i in range(N):
            g[i] = math.exp(tau[i] - m)
            tot += g[i]
        for i in range(N):
            g[i] /= tot
        for i in range(N):
            e = 0.0
            for c in range(C):
                e += (y[c] - O[i, c]) ** 2
            h[i] = math.log(max(g[i], 1e-300)) - 0.5 * e
        m = h.max()
        tot = 0.0
        for i in range(N):
            h[i] = math.exp(h[i] - m)
            tot += h[i]
        for i in range(N):
            h[i] /= tot
        for i in range(N):
            for c in range(C):
                d_out[c] = h[i] * (y[c] - O[i, c]) * O[i, c] * (1.0 - O[i, c])
            for k in range(H):
                acc = 0.0
                for c in range(C):
                    acc += w[i, c, k] * d_out[c]
                d_hid[k] = acc * v[i, k] * (1.0 - v[i, k])
            for c in range(C):
                for k in range(H):
                    w[i, c, k] += eta_e * d_out[c] * v[i, k]
                w[i, c, H] += eta_e * d_out[c]
            for k in range(H):
                for j in range(D1):
                    omega[i, k, j] += eta_e * d_hid[k] * xa[j]
        for i in range(N):
            d_tau[i] = (h[i] - g[i]) * tau[i] * (1.0 - tau[i])
        for k in range(G):
            acc = 0.0
            for i in range(N):
                acc += zeta[i, k] * d_tau[i]
            d_theta[k] = acc * theta[k] * (1.0 - theta[k])
        for i in range(N):
            for k in range(G):
                zeta[i, k] += eta_g * d_tau[i] * theta[k]
            zeta[i, G] += eta_g * d_tau[i]
        for k in range(G):
            for j in range(D1):
                xi[k, j] += eta_g * d_theta[k] * xa[j]


def _epoch_numpy(omega, w, xi, zeta, Xs, Y, order, eta_e, eta_g):
    model = MoEModel(omega, w, xi, zeta, np.zeros(Xs.shape[1]), np.ones(Xs.shape[1]))
    cfg = TrainConfig(eta_e=eta_e, eta_g=eta_g)
    for s in order:
        for name, delta in updates(model, Xs[s], Y[s], cfg).items():
            getattr(model, name)[...] += delta


_epoch = pick(_epoch_numba, _epoch_numpy)


def run_epoch(model: MoEModel, Xs, Y, order, cfg: TrainConfig, kernel=None) -> None:
    """In-place online pass over standardised inputs ``Xs`` in ``order``."""
    (kernel or _epoch)(model.omega, model.w, model.xi, model.zeta, Xs, Y, order, cfg.eta_e, cfg.eta_g)
    for name in _LAYERS:
        if not np.all(np.isfinite(getattr(model, name))):
            raise FloatingPointError(f"non-finite weights in layer {name!r}")


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.min() < 1 or lab.max() > n_classes:
        raise ValueError(f"labels must lie in 1..{n_classes}")
    out = np.zeros((lab.size, n_classes))
    out[np.arange(lab.size), lab - 1] = 1.0
    return out


def predict(model: MoEModel, X) -> np.ndarray:
    """Class ids (1-based) for a batch; ties go to the lowest class."""
    return np.argmax(forward_batch(model, X), axis=1) + 1


def accuracy(model: MoEModel, X, y) -> float:
    return float(np.mean(predict(model, X) == np.asarray(y)))


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_acc,test_acc"]
        lines += [f"{e},{a:.6f},{b:.6f}" for e, a, b in self.rows]
        return "\n".join(lines) + "\n"


def train(X_train, y_train, X_test, y_test, cfg: TrainConfig = TrainConfig()) -> tuple[MoEModel, TrainLog]:
    """Online training with a seeded shuffle per epoch.

    Inputs are standardised with the training-set mean and deviation (kept in
    the model). Returns the model from the epoch with the best held-out
    accuracy (earliest on ties) and the per-epoch log.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    missing = set(range(1, N_CLASSES + 1)) - set(y_train.tolist())
    if missing:
        raise ValueError(f"training set lacks class(es) {sorted(missing)}")
    model = init_model(X_train.shape[1], N_CLASSES, cfg.n_experts, cfg.hidden, cfg.gate_hidden, cfg.seed)
    mean = X_train.mean(axis=0)
    scale = X_train.std(axis=0)
    scale[scale < 1e-12] = 1.0
    model.x_mean, model.x_scale = mean, scale
    Xs = np.ascontiguousarray((X_train - mean) / scale)
    Y = one_hot(y_train)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    best, best_acc = model.copy(), -1.0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(Xs)).astype(np.int64)
        run_epoch(model, Xs, Y, order, cfg)
        tr = accuracy(model, X_train, y_train)
        te = accuracy(model, X_test, y_test)
        log.rows.append((epoch, tr, te))
        if te > best_acc:
            best, best_acc, log.best_epoch = model.copy(), te, epoch
    return best, log


def decide(T) -> tuple[int, float]:
    """(class 1..C, confidence = max entry of ``T``); ties -> lowest class."""
    T = np.asarray(T, dtype=np.float64)
    k = int(np.argmax(T))
    return k + 1, float(T[k])


def classify(model: MoEModel, x) -> tuple[int, float]:
    return decide(forward(model, x)[0])


def confusion_matrix(true, pred, n_classes: int = N_CLASSES) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true, pred):
        cm[int(t) - 1, int(p) - 1] += 1
    return cm


def save_moe(path: str | os.PathLike, model: MoEModel, meta: dict | None = None) -> None:
    names = ("omega", "w", "xi", "zeta", "x_mean", "x_scale")
    modelio.save(path, "moe", dict(zip(names, model.arrays())), meta)


def load_moe(path: str | os.PathLike) -> MoEModel:
    a, _ = modelio.load(path, "moe")
    return MoEModel(a["omega"], a["w"], a["xi"], a["zeta"], a["x_mean"], a["x_scale"])

