"""Gradient oracles and small analytically differentiable classifiers.

Anything with ``input_shape``, ``num_classes``, ``value(x, c)``,
``probabilities(x)`` and ``gradient(x, c)`` can be explained. The built-in
:class:`ToyModel` adds batched ``values``/``gradients`` that the integrators
use when present.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np
from scipy.special import expit, log_softmax

from .errors import FormatError, ArtifactIOError, InvalidParameterError, TrainingFailure
from .tasks import make_task, sample

__all__ = [
    "ARCHITECTURES",
    "CallableOracle",
    "GradientOracle",
    "ToyModel",
    "ToyModelWeights",
    "TrainConfig",
    "finite_diff_gradient",
    "gradient",
    "gradients_batch",
    "init_weights",
    "linear_score",
    "load_weights",
    "save_weights",
    "train_toy",
    "value",
    "values_batch",
]

ARCHITECTURES = ("linear", "softmax-regression", "mlp", "tiny-cnn")
ACTIVATIONS = ("softplus", "relu")
WEIGHTS_SCHEMA = "pathattr.toy-weights"
WEIGHTS_VERSION = 1


@runtime_checkable
class GradientOracle(Protocol):
    input_shape: tuple[int, int, int]
    num_classes: int

    def value(self, x: np.ndarray, c: int) -> float: ...

    def probabilities(self, x: np.ndarray) -> np.ndarray: ...

    def gradient(self, x: np.ndarray, c: int) -> np.ndarray: ...


def _check(m, x, c) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and len(m.input_shape) == 3 and m.input_shape[2] == 1:
        x = x[:, :, None]
    if tuple(x.shape) != tuple(m.input_shape):
        raise InvalidParameterError(f"input shape {x.shape} does not match model {tuple(m.input_shape)}")
    if not 0 <= int(c) < m.num_classes:
        raise InvalidParameterError(f"class {c} out of range for {m.num_classes} classes")
    return x


def value(m: GradientOracle, x, c: int) -> float:
    """Score ``f_c(x)`` (post-softmax probability for the toy classifiers)."""
    return float(m.value(_check(m, x, c), int(c)))


def gradient(m: GradientOracle, x, c: int) -> np.ndarray:
    """Analytic ``∂f_c/∂x`` with the input's shape."""
    return np.asarray(m.gradient(_check(m, x, c), int(c)), dtype=np.float64)


def values_batch(m: GradientOracle, xs: np.ndarray, c: int) -> np.ndarray:
    """``f_c`` for a stack of inputs, using the model's batched path if it has one."""
    if hasattr(m, "values"):
        return np.asarray(m.values(xs, c), dtype=np.float64)
    return np.array([m.value(x, c) for x in xs], dtype=np.float64)


def gradients_batch(m: GradientOracle, xs: np.ndarray, c: int) -> np.ndarray:
    if hasattr(m, "gradients"):
        return np.asarray(m.gradients(xs, c), dtype=np.float64)
    return np.stack([np.asarray(m.gradient(x, c), dtype=np.float64) for x in xs])


def finite_diff_gradient(m: GradientOracle, x, c: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of ``∂f_c/∂x``; a test oracle, O(2·D) evaluations."""
    if not h > 0:
        raise InvalidParameterError(f"step h must be positive, got {h}")
    x = _check(m, x, c)
    d = x.size
    eye = np.eye(d).reshape((d,) + x.shape) * h
    # chunked to bound memory on larger inputs
    out = np.empty(d)
    for start in range(0, d, 512):
        e = eye[start : start + 512]
        plus = values_batch(m, x[None] + e, c)
        minus = values_batch(m, x[None] - e, c)
        out[start : start + 512] = (plus - minus) / (2.0 * h)
    return out.reshape(x.shape)


class CallableOracle:
    """Wrap a scalar function (and optionally its gradient) as a one-class oracle.

    Without ``grad``, gradients fall back to central differences with ``h``.
    """

    num_classes = 1

    def __init__(self, f: Callable[[np.ndarray], float], input_shape, grad=None, h: float = 1e-6):
        self.f = f
        self.grad = grad
        self.h = h
        self.input_shape = tuple(input_shape)

    def value(self, x, c=0):
        return float(self.f(np.asarray(x, dtype=np.float64)))

    def probabilities(self, x):
        return np.ones(1)

    def gradient(self, x, c=0):
        x = np.asarray(x, dtype=np.float64)
        if self.grad is None:
            return finite_diff_gradient(self, x, 0, self.h)
        return np.asarray(self.grad(x), dtype=np.float64).reshape(x.shape)


# ---------------------------------------------------------------------------
# toy networks


@dataclass
class ToyModelWeights:
    """Parameters of a built-in toy classifier.

    ``layers`` is a list of parameter dicts. Dense layers hold ``W`` of shape
    ``(out, in)`` and ``b``; the convolution of ``tiny-cnn`` holds ``K`` of
    shape ``(k, k, C, F)`` and ``b``. ``pool`` is the average-pool factor
    after the convolution.
    """

    arch: str
    input_shape: tuple[int, int, int]
    num_classes: int
    layers: list[dict[str, np.ndarray]]
    activation: str = "softplus"
    pool: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.validate()

    def validate(self) -> None:
        if self.arch not in ARCHITECTURES:
            raise InvalidParameterError(f"unknown architecture {self.arch!r}")
        if self.activation not in ACTIVATIONS:
            raise InvalidParameterError(f"unknown activation {self.activation!r}")
        if self.num_classes < 1:
            raise InvalidParameterError("num_classes must be >= 1")
        if not self.layers:
            raise InvalidParameterError("model has no layers")
        for layer in self.layers:
            for name, arr in layer.items():
                if not np.all(np.isfinite(arr)):
                    raise InvalidParameterError(f"non-finite parameter {name}")
        H, W, C = self.input_shape
        dense = self.layers
        width = H * W * C
        if self.arch == "tiny-cnn":
            conv = self.layers[0]
            K = conv["K"]
            if K.ndim != 4 or K.shape[0] != K.shape[1] or K.shape[0] % 2 == 0 or K.shape[2] != C:
                raise InvalidParameterError(f"bad conv kernel shape {K.shape}")
            if conv["b"].shape != (K.shape[3],):
                raise InvalidParameterError("conv bias does not match filter count")
            if self.pool < 1 or H % self.pool or W % self.pool:
                raise InvalidParameterError(f"pool {self.pool} does not divide {H}x{W}")
            width = (H // self.pool) * (W // self.pool) * K.shape[3]
            dense = self.layers[1:]
        elif self.arch in ("linear", "softmax-regression") and len(self.layers) != 1:
            raise InvalidParameterError(f"{self.arch} has exactly one dense layer")
        for layer in dense:
            Wm, b = layer["W"], layer["b"]
            if Wm.ndim != 2 or Wm.shape[1] != width or b.shape != (Wm.shape[0],):
                raise InvalidParameterError(f"dense layer shape {Wm.shape} does not chain from width {width}")
            width = Wm.shape[0]
        if width != self.num_classes:
            raise InvalidParameterError(f"last layer width {width} != num_classes {self.num_classes}")


def _act(kind, z):
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    return np.maximum(z, 0.0)


def _dact(kind, z):
    if kind == "softplus":
        return expit(z)
    return (z > 0).astype(np.float64)


class ToyModel:
    """Numpy classifier with exact, hand-written backpropagation.

    ``output`` chooses what :meth:`value` returns: ``"prob"`` (softmax
    probability) or ``"logit"`` (pre-softmax score). The default is logits for
    the ``linear`` architecture and probabilities otherwise.
    """

    def __init__(self, weights: ToyModelWeights, output: str | None = None):
        self.weights = weights
        if output is None:
            output = "logit" if weights.arch == "linear" else "prob"
        if output not in ("prob", "logit"):
            raise InvalidParameterError(f"output must be 'prob' or 'logit', got {output!r}")
        self.output = output

    @property
    def input_shape(self):
        return self.weights.input_shape

    @property
    def num_classes(self):
        return self.weights.num_classes

    # -- core passes over a batch (B, H, W, C)

    def _forward(self, xb):
        w = self.weights
        act = w.activation
        cache = {"x": xb}
        B = xb.shape[0]
        if w.arch == "tiny-cnn":
            K, bc = w.layers[0]["K"], w.layers[0]["b"]
            k = K.shape[0]
            r = k // 2
            H, W, _ = w.input_shape
            xp = np.pad(xb, ((0, 0), (r, r), (r, r), (0, 0)))
            z = np.broadcast_to(bc, (B, H, W, K.shape[3])).copy()
            for i in range(k):
                for j in range(k):
                    z += xp[:, i : i + H, j : j + W, :] @ K[i, j]
            a = _act(act, z)
            p = w.pool
            F = K.shape[3]
            pooled = a.reshape(B, H // p, p, W // p, p, F).mean(axis=(2, 4))
            h = pooled.reshape(B, -1)
            cache.update(xp=xp, z=z)
            dense = w.layers[1:]
        else:
            h = xb.reshape(B, -1)
            dense = w.layers
        hs, zs = [h], []
        for n, layer in enumerate(dense):
            z = h @ layer["W"].T + layer["b"]
            zs.append(z)
            if n < len(dense) - 1:
                h = _act(act, z)
                hs.append(h)
            else:
                h = z
        cache.update(hs=hs, zs=zs)
        return h, cache

    def _backward(self, cache, dlogits, params=False):
        w = self.weights
        act = w.activation
        xb = cache["x"]
        B = xb.shape[0]
        dense = w.layers[1:] if w.arch == "tiny-cnn" else w.layers
        hs, zs = cache["hs"], cache["zs"]
        grads = []
        dz = dlogits
        for n in range(len(dense) - 1, -1, -1):
            layer = dense[n]
            if params:
                grads.append({"W": dz.T @ hs[n], "b": dz.sum(axis=0)})
            dh = dz @ layer["W"]
            if n > 0:
                dz = dh * _dact(act, zs[n - 1])
        grads.reverse()
        if w.arch != "tiny-cnn":
            return dh.reshape(xb.shape), grads
        K = w.layers[0]["K"]
        k = K.shape[0]
        r = k // 2
        H, W, C = w.input_shape
        F = K.shape[3]
        p = w.pool
        dpool = dh.reshape(B, H // p, 1, W // p, 1, F) / (p * p)
        da = np.broadcast_to(dpool, (B, H // p, p, W // p, p, F)).reshape(B, H, W, F)
        dz = da * _dact(act, cache["z"])
        xp = cache["xp"]
        dxp = np.zeros_like(xp)
        dK = np.zeros_like(K) if params else None
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + H, j : j + W, :] += dz @ K[i, j].T
                if params:
                    dK[i, j] = xp[:, i : i + H, j : j + W, :].reshape(-1, C).T @ dz.reshape(-1, F)
        if params:
            grads.insert(0, {"K": dK, "b": dz.sum(axis=(0, 1, 2))})
        return dxp[:, r : r + H, r : r + W, :], grads

    def _batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 3 and self.input_shape[2] == 1 and xs.shape[1:] == self.input_shape[:2]:
            xs = xs[..., None]
        if xs.shape[1:] != tuple(self.input_shape):
            raise InvalidParameterError(f"batch shape {xs.shape} does not match model {self.input_shape}")
        return xs

    # -- public oracle surface

    def logits_batch(self, xs) -> np.ndarray:
        return self._forward(self._batch(xs))[0]

    def logits(self, x) -> np.ndarray:
        return self.logits_batch(np.asarray(x)[None])[0]

    def probabilities_batch(self, xs) -> np.ndarray:
        return np.exp(log_softmax(self.logits_batch(xs), axis=1))

    def probabilities(self, x) -> np.ndarray:
        return self.probabilities_batch(np.asarray(x)[None])[0]

    def predict(self, xs) -> np.ndarray:
        return np.argmax(self.logits_batch(xs), axis=1)

    def values(self, xs, c: int) -> np.ndarray:
        if self.output == "logit":
            return self.logits_batch(xs)[:, c]
        return self.probabilities_batch(xs)[:, c]

    def value(self, x, c: int) -> float:
        return float(self.values(np.asarray(x)[None], c)[0])

    def gradients(self, xs, c: int) -> np.ndarray:
        xs = self._batch(xs)
        logits, cache = self._forward(xs)
        dl = np.zeros_like(logits)
        if self.output == "logit":
            dl[:, c] = 1.0
        else:
            p = np.exp(log_softmax(logits, axis=1))
            dl = -p * p[:, c : c + 1]
            dl[:, c] += p[:, c]
        return self._backward(cache, dl)[0]

    def gradient(self, x, c: int) -> np.ndarray:
        return self.gradients(np.asarray(x)[None], c)[0]


def linear_score(w, b: float = 0.0) -> ToyModel:
    """One-class oracle ``s(x) = w·x + b`` with an identity head."""
    w = np.asarray(w, dtype=np.float64)
    shape = w.shape if w.ndim == 3 else (1, w.size, 1) if w.ndim == 1 else w.shape + (1,)
    weights = ToyModelWeights(
        arch="linear",
        input_shape=shape,
        num_classes=1,
        layers=[{"W": w.reshape(1, -1).copy(), "b": np.array([float(b)])}],
    )
    return ToyModel(weights, output="logit")


# ---------------------------------------------------------------------------
# initialization and training


def init_weights(
    arch: str,
    input_shape,
    num_classes: int,
    *,
    seed: int = 0,
    hidden: tuple[int, ...] = (32,),
    filters: int = 6,
    kernel: int = 3,
    pool: int = 4,
    activation: str = "softplus",
) -> ToyModelWeights:
    """He-scaled Gaussian initialization from a seeded generator."""
    if arch not in ARCHITECTURES:
        raise InvalidParameterError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    rng = np.random.default_rng(seed)
    H, W, C = (int(s) for s in input_shape)

    def dense(n_in, n_out):
        return {"W": rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_out, n_in)), "b": np.zeros(n_out)}

    layers = []
    if arch == "tiny-cnn":
        fan_in = kernel * kernel * C
        layers.append({"K": rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(kernel, kernel, C, filters)),
                       "b": np.zeros(filters)})
        width = (H // pool) * (W // pool) * filters
        layers.append(dense(width, num_classes))
    else:
        width = H * W * C
        sizes = hidden if arch == "mlp" else ()
        for n in sizes:
            layers.append(dense(width, n))
            width = n
        layers.append(dense(width, num_classes))
        pool = 1
    return ToyModelWeights(arch=arch, input_shape=(H, W, C), num_classes=num_classes, layers=layers,
                           activation=activation, pool=pool)


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "tiny-cnn"
    activation: str = "softplus"
    hidden: tuple[int, ...] = (32,)
    filters: int = 6
    kernel: int = 3
    pool: int = 4
    n_train: int = 2000
    n_test: int = 500
    epochs: int = 6
    batch: int = 32
    lr: float = 0.05
    decay_every: int = 2
    decay: float = 0.5

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def train_toy(task=None, seed: int = 7, config: TrainConfig | None = None, log=None) -> ToyModelWeights:
    """Fit a toy classifier on a synthetic task with plain minibatch SGD.

    The learning rate follows a fixed step schedule, and every random draw
    (data, init, shuffling) derives from ``seed``. Identical arguments therefore
    give identical weights.

    Args:
        task: task name, dict or :class:`TaskSpec`.
        seed: master seed.
        config: architecture and optimizer settings.
        log: optional callable receiving one progress string per epoch.

    Raises:
        TrainingFailure: if the loss becomes non-finite.
    """
    task = make_task(task)
    config = config or TrainConfig()
    ss = np.random.SeedSequence(seed)
    data_seed, test_seed, init_seed, shuffle_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(4))
    x_train, y_train, _ = sample(task, config.n_train, data_seed)
    x_test, y_test, _ = sample(task, config.n_test, test_seed)
    weights = init_weights(config.arch, task.input_shape, task.num_classes, seed=init_seed,
                           hidden=tuple(config.hidden), filters=config.filters, kernel=config.kernel,
                           pool=config.pool, activation=config.activation)
    model = ToyModel(weights, output="prob")
    rng = np.random.default_rng(shuffle_seed)
    lr = config.lr
    onehot = np.eye(task.num_classes)
    for epoch in range(config.epochs):
        if epoch and epoch % config.decay_every == 0:
            lr *= config.decay
        order = rng.permutation(config.n_train)
        total = 0.0
        for start in range(0, config.n_train, config.batch):
            idx = order[start : start + config.batch]
            logits, cache = model._forward(x_train[idx])
            logp = log_softmax(logits, axis=1)
            loss = -np.mean(logp[np.arange(len(idx)), y_train[idx]])
            if not math.isfinite(loss):
                raise TrainingFailure(f"non-finite loss at epoch {epoch}")
            total += loss * len(idx)
            dl = (np.exp(logp) - onehot[y_train[idx]]) / len(idx)
            _, grads = model._backward(cache, dl, params=True)
            for layer, g in zip(weights.layers, grads):
                for name in layer:
                    layer[name] -= lr * g[name]
        acc = float(np.mean(model.predict(x_test) == y_test))
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} lr={lr:.4g} loss={total / config.n_train:.6f} test_acc={acc:.4f}")
    for layer in weights.layers:
        for name, arr in layer.items():
            if not np.all(np.isfinite(arr)):
                raise TrainingFailure(f"non-finite parameter {name} after training")
    weights.meta = {
        "task": task.to_dict(),
        "train": config.to_dict(),
        "seed": int(seed),
        "test_accuracy": acc,
    }
    return weights


# ---------------------------------------------------------------------------
# serialization


def weights_to_dict(w: ToyModelWeights) -> dict:
    return {
        "schema": WEIGHTS_SCHEMA,
        "version": WEIGHTS_VERSION,
        "arch": w.arch,
        "activation": w.activation,
        "input_shape": list(w.input_shape),
        "num_classes": w.num_classes,
        "pool": w.pool,
        "layers": [
            {name: {"shape": list(arr.shape), "data": arr.ravel().tolist()} for name, arr in layer.items()}
            for layer in w.layers
        ],
        "meta": w.meta,
    }


def weights_from_dict(doc: dict) -> ToyModelWeights:
    if not isinstance(doc, dict) or doc.get("schema") != WEIGHTS_SCHEMA:
        raise FormatError("not a pathattr toy-weights document")
    version = doc.get("version")
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weights version {version!r} (expected {WEIGHTS_VERSION})")
    try:
        layers = []
        for layer in doc["layers"]:
            params = {}
            for name, blob in layer.items():
                shape = tuple(int(s) for s in blob["shape"])
                data = np.asarray(blob["data"], dtype=np.float64)
                if data.ndim != 1 or data.size != math.prod(shape):
                    raise FormatError(f"parameter {name}: {data.size} values for shape {shape}")
                params[name] = data.reshape(shape)
            layers.append(params)
        return ToyModelWeights(
            arch=doc["arch"],
            input_shape=tuple(doc["input_shape"]),
            num_classes=int(doc["num_classes"]),
            layers=layers,
            activation=doc.get("activation", "softplus"),
            pool=int(doc.get("pool", 1)),
            meta=doc.get("meta", {}),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed weights document: {exc}") from exc


def save_weights(w: ToyModelWeights, path) -> None:
    text = json.dumps(weights_to_dict(w), sort_keys=True, allow_nan=False)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot write weights: {exc}") from exc


def load_weights(path) -> ToyModelWeights:
    try:
        with open(os.fspath(path), encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"{path}: cannot read weights: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return weights_from_dict(doc)
