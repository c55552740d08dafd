"""Multitask dense network: shared embedding, time max-pool, DoA + event heads.

Per-segment 618-dim features pass through two FC+BN+ReLU+dropout blocks;
an elementwise max over a sample's segments pools them into one embedding,
from which an FC+BN+ReLU hidden layer plus an output layer per branch
produce the 360-dim DoA posterior (logistic) and the class posterior
(softmax). Gradients are derived analytically; everything is float64 and
fully seeded, so training is bit-reproducible.

Loss: lambda * sum-squared-error against the likelihood-coded DoA target
plus (1 - lambda) * cross-entropy on the event class, averaged over the
batch. lambda = 1 or 0 recovers the single-task modes exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

BN_EPS = 1e-5
CE_PROB_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"SLCM"
CHECKPOINT_VERSION = 1

LAYER_ORDER = ("embed1", "embed2", "doa_hidden", "doa_out", "sec_hidden", "sec_out")
BN_LAYERS = frozenset(("embed1", "embed2", "doa_hidden", "sec_hidden"))
PARAM_KEYS = ("w", "b", "gamma", "beta")


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def mse_loss(target: np.ndarray, prediction: np.ndarray) -> float:
    """Sum of squared differences over the 360 DoA bins (one sample)."""
    target = np.asarray(target, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if target.shape != prediction.shape:
        raise ValidationError(f"shape mismatch: target {target.shape} vs prediction {prediction.shape}")
    diff = prediction - target
    return float(diff @ diff)


def ce_loss(true_class: int, class_probs: np.ndarray) -> float:
    """Categorical cross-entropy -log p[true_class], floored away from infinity."""
    class_probs = np.asarray(class_probs, dtype=np.float64)
    if not 0 <= true_class < class_probs.shape[-1]:
        raise ValidationError(f"true_class {true_class} out of range for {class_probs.shape[-1]} classes")
    return float(-np.log(max(class_probs[true_class], CE_PROB_FLOOR)))


def combined_loss(mse: float, ce: float, lam: float) -> float:
    """lambda-weighted sum; lambda=1 is exactly the MSE, lambda=0 exactly the CE."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    if lam == 1.0:
        return mse
    if lam == 0.0:
        return ce
    return lam * mse + (1.0 - lam) * ce


class SLCNet:
    """Shared-embedding multitask net with analytic backward pass."""

    def __init__(
        self,
        input_dim: int = 618,
        hidden: int = 512,
        num_classes: int = 10,
        num_doa: int = 360,
        dropout: float = 0.2,
        bn_momentum: float = 0.9,
        seed: int = 0,
    ):
        if min(input_dim, hidden, num_classes, num_doa) <= 0:
            raise ValidationError("all layer dimensions must be positive")
        if not 0.0 <= dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {dropout}")
        self.input_dim = input_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.num_doa = num_doa
        self.dropout = dropout
        self.bn_momentum = bn_momentum
        self.params: dict[str, dict[str, np.ndarray]] = {}
        rng = np.random.default_rng(seed)
        for name, (fan_in, fan_out) in self._layer_dims().items():
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layer = {
                "w": rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                "b": np.zeros(fan_out),
            }
            if name in BN_LAYERS:
                layer["gamma"] = np.ones(fan_out)
                layer["beta"] = np.zeros(fan_out)
                layer["run_mean"] = np.zeros(fan_out)
                layer["run_var"] = np.ones(fan_out)
            self.params[name] = layer

    def _layer_dims(self) -> dict[str, tuple[int, int]]:
        h = self.hidden
        return {
            "embed1": (self.input_dim, h),
            "embed2": (h, h),
            "doa_hidden": (h, h),
            "doa_out": (h, self.num_doa),
            "sec_hidden": (h, h),
            "sec_out": (h, self.num_classes),
        }

    def parameter_items(self) -> list[tuple[str, str, np.ndarray]]:
        """Trainable tensors in a fixed order: (layer, key, array)."""
        out = []
        for name in LAYER_ORDER:
            for key in PARAM_KEYS:
                if key in self.params[name]:
                    out.append((name, key, self.params[name][key]))
        return out

    # ------------------------------------------------------------------
    # forward / backward
    # ------------------------------------------------------------------

    @staticmethod
    def _as_rows(segments) -> tuple[np.ndarray, np.ndarray]:
        """Stack per-sample segment matrices into rows plus boundary offsets."""
        if isinstance(segments, np.ndarray) and segments.ndim == 2:
            rows = np.asarray(segments, dtype=np.float64)
            starts = np.arange(rows.shape[0] + 1)
            return rows, starts
        mats = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in segments]
        if not mats:
            raise ValidationError("empty batch")
        counts = [m.shape[0] for m in mats]
        if any(c == 0 for c in counts):
            raise ValidationError("every sample needs at least one segment")
        starts = np.concatenate([[0], np.cumsum(counts)])
        return np.vstack(mats), starts

    def _bn_forward(self, name, z, train, cache):
        layer = self.params[name]
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            layer["run_mean"] = self.bn_momentum * layer["run_mean"] + (1 - self.bn_momentum) * mu
            layer["run_var"] = self.bn_momentum * layer["run_var"] + (1 - self.bn_momentum) * var
        else:
            mu = layer["run_mean"]
            var = layer["run_var"]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z - mu) * inv_std
        cache[name + "/xhat"] = xhat
        cache[name + "/inv_std"] = inv_std
        return layer["gamma"] * xhat + layer["beta"]

    def _forward(self, segments, train: bool, rng: np.random.Generator | None):
        rows, starts = self._as_rows(segments)
        if rows.shape[1] != self.input_dim:
            raise ValidationError(
                f"segment dim {rows.shape[1]} does not match model input dim {self.input_dim}"
            )
        if train and self.dropout > 0.0 and rng is None:
            raise ValidationError("train-mode forward with dropout needs an rng")
        num_samples = starts.size - 1
        cache: dict = {"rows": rows, "starts": starts, "train": train}

        x = rows
        for name in ("embed1", "embed2"):
            layer = self.params[name]
            cache[name + "/in"] = x
            z = x @ layer["w"] + layer["b"]
            y = self._bn_forward(name, z, train, cache)
            a = relu(y)
            cache[name + "/act"] = a
            if train and self.dropout > 0.0:
                mask = (rng.random(a.shape) >= self.dropout) / (1.0 - self.dropout)
                cache[name + "/mask"] = mask
                x = a * mask
            else:
                x = a
        cache["embedded"] = x

        if num_samples == rows.shape[0]:
            pooled = x
            pool_argmax = None
        else:
            pooled = np.empty((num_samples, x.shape[1]))
            pool_argmax = np.empty((num_samples, x.shape[1]), dtype=np.intp)
            for i in range(num_samples):
                block = x[starts[i] : starts[i + 1]]
                pool_argmax[i] = block.argmax(axis=0) + starts[i]
                pooled[i] = block.max(axis=0)
        cache["pooled"] = pooled
        cache["pool_argmax"] = pool_argmax

        head_out = {}
        for hidden_name, out_name in (("doa_hidden", "doa_out"), ("sec_hidden", "sec_out")):
            layer = self.params[hidden_name]
            z = pooled @ layer["w"] + layer["b"]
            y = self._bn_forward(hidden_name, z, train, cache)
            h = relu(y)
            cache[hidden_name + "/act"] = h
            out_layer = self.params[out_name]
            head_out[out_name] = h @ out_layer["w"] + out_layer["b"]

        doa_posterior = sigmoid(head_out["doa_out"])
        class_probs = softmax(head_out["sec_out"])
        cache["doa_posterior"] = doa_posterior
        cache["class_probs"] = class_probs
        return doa_posterior, class_probs, cache

    def forward(self, segments, train: bool = False, rng: np.random.Generator | None = None):
        """Batch posteriors: (doa [B x 360], class_probs [B x C])."""
        doa, probs, _ = self._forward(segments, train, rng)
        return doa, probs

    def predict_sample(self, segments) -> tuple[np.ndarray, np.ndarray]:
        """Inference on one sample's segment sequence -> (360-dim, C-dim)."""
        segments = np.atleast_2d(np.asarray(segments, dtype=np.float64))
        doa, probs, _ = self._forward([segments], train=False, rng=None)
        return doa[0], probs[0]

    def batch_loss(
        self,
        segments,
        doa_targets: np.ndarray,
        class_ids: np.ndarray,
        lam: float,
        train: bool = True,
        rng: np.random.Generator | None = None,
    ) -> float:
        """Mean combined loss over a batch (forward only)."""
        doa, probs, _ = self._forward(segments, train, rng)
        return self._loss_from_outputs(doa, probs, doa_targets, class_ids, lam)

    @staticmethod
    def _loss_from_outputs(doa, probs, doa_targets, class_ids, lam) -> float:
        if not 0.0 <= lam <= 1.0:
            raise ValidationError(f"lambda must be in [0, 1], got {lam}")
        diff = doa - doa_targets
        mse_terms = (diff * diff).sum(axis=1)
        picked = probs[np.arange(probs.shape[0]), class_ids]
        ce_terms = -np.log(np.maximum(picked, CE_PROB_FLOOR))
        if lam == 1.0:
            per_sample = mse_terms
        elif lam == 0.0:
            per_sample = ce_terms
        else:
            per_sample = lam * mse_terms + (1.0 - lam) * ce_terms
        return float(per_sample.mean())

    def backward_batch(
        self,
        segments,
        doa_targets: np.ndarray,
        class_ids: np.ndarray,
        lam: float,
        rng: np.random.Generator | None = None,
    ):
        """Analytic gradients of the mean combined loss; returns (loss, grads).

        grads mirrors self.params: grads[layer][key]. Max-pool routes each
        feature's gradient to the first maximal segment; the dropout masks
        drawn from rng during the forward pass are reused exactly.
        """
        doa_targets = np.asarray(doa_targets, dtype=np.float64)
        class_ids = np.asarray(class_ids, dtype=np.intp)
        doa, probs, cache = self._forward(segments, train=True, rng=rng)
        loss = self._loss_from_outputs(doa, probs, doa_targets, class_ids, lam)
        batch = doa.shape[0]

        grads = {name: {} for name in LAYER_ORDER}

        # output deltas; the (1 - lam) factor zeroes the untrained branch exactly
        d_doa_logits = lam * (2.0 * (doa - doa_targets) * doa * (1.0 - doa)) / batch
        onehot = np.zeros_like(probs)
        onehot[np.arange(batch), class_ids] = 1.0
        d_sec_logits = (1.0 - lam) * (probs - onehot) / batch

        d_pooled = np.zeros_like(cache["pooled"])
        for hidden_name, out_name, delta in (
            ("doa_hidden", "doa_out", d_doa_logits),
            ("sec_hidden", "sec_out", d_sec_logits),
        ):
            h = cache[hidden_name + "/act"]
            grads[out_name]["w"] = h.T @ delta
            grads[out_name]["b"] = delta.sum(axis=0)
            d_h = delta @ self.params[out_name]["w"].T
            d_y = d_h * (h > 0)
            d_z = self._bn_backward(hidden_name, d_y, grads, cache)
            grads[hidden_name]["w"] = cache["pooled"].T @ d_z
            grads[hidden_name]["b"] = d_z.sum(axis=0)
            d_pooled += d_z @ self.params[hidden_name]["w"].T

        pool_argmax = cache["pool_argmax"]
        if pool_argmax is None:
            d_rows = d_pooled
        else:
            d_rows = np.zeros_like(cache["embedded"])
            cols = np.arange(d_rows.shape[1])
            for i in range(batch):
                np.add.at(d_rows, (pool_argmax[i], cols), d_pooled[i])

        d_x = d_rows
        for name in ("embed2", "embed1"):
            a = cache[name + "/act"]
            mask = cache.get(name + "/mask")
            d_a = d_x * mask if mask is not None else d_x
            d_y = d_a * (a > 0)
            d_z = self._bn_backward(name, d_y, grads, cache)
            x_in = cache[name + "/in"]
            grads[name]["w"] = x_in.T @ d_z
            grads[name]["b"] = d_z.sum(axis=0)
            d_x = d_z @ self.params[name]["w"].T

        return loss, grads

    def _bn_backward(self, name, d_out, grads, cache):
        """Backprop through train-mode batch norm using cached xhat/inv_std."""
        xhat = cache[name + "/xhat"]
        inv_std = cache[name + "/inv_std"]
        gamma = self.params[name]["gamma"]
        grads[name]["gamma"] = (d_out * xhat).sum(axis=0)
        grads[name]["beta"] = d_out.sum(axis=0)
        d_xhat = d_out * gamma
        n = d_out.shape[0]
        return (inv_std / n) * (
            n * d_xhat - d_xhat.sum(axis=0) - xhat * (d_xhat * xhat).sum(axis=0)
        )

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """Versioned binary checkpoint; save -> load -> forward is bit-exact."""
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(LAYER_ORDER)))
            for name in LAYER_ORDER:
                layer = self.params[name]
                rows, cols = layer["w"].shape
                fh.write(struct.pack("<II", rows, cols))
                fh.write(np.ascontiguousarray(layer["w"], dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(layer["b"], dtype="<f8").tobytes())
                for key in ("gamma", "beta", "run_mean", "run_var"):
                    if key in layer:
                        vec = layer[key]
                    elif key == "gamma" or key == "run_var":
                        vec = np.ones(cols)
                    else:
                        vec = np.zeros(cols)
                    fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())
            fh.write(struct.pack("<II", self.num_classes, self.hidden))


def load_checkpoint(path) -> SLCNet:
    """Reconstruct a model from its checkpoint; structural mismatches raise FormatError."""
    path = Path(path)
    blob = path.read_bytes()
    view = memoryview(blob)
    if len(blob) < 12 or bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a model checkpoint")
    version, layer_count = struct.unpack("<II", view[4:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if layer_count != len(LAYER_ORDER):
        raise FormatError(f"{path}: expected {len(LAYER_ORDER)} layers, found {layer_count}")

    offset = 12
    raw = {}
    for name in LAYER_ORDER:
        if offset + 8 > len(blob):
            raise FormatError(f"{path}: truncated before layer {name}")
        rows, cols = struct.unpack("<II", view[offset : offset + 8])
        offset += 8
        need = 8 * (rows * cols + 5 * cols)
        if offset + need > len(blob):
            raise FormatError(f"{path}: truncated inside layer {name}")
        w = np.frombuffer(view[offset : offset + 8 * rows * cols], dtype="<f8").reshape(rows, cols).copy()
        offset += 8 * rows * cols
        vecs = []
        for _ in range(5):
            vecs.append(np.frombuffer(view[offset : offset + 8 * cols], dtype="<f8").copy())
            offset += 8 * cols
        raw[name] = (w, *vecs)
    if offset + 8 > len(blob):
        raise FormatError(f"{path}: missing class-count/hidden-width trailer")
    num_classes, hidden = struct.unpack("<II", view[offset : offset + 8])

    input_dim = raw["embed1"][0].shape[0]
    num_doa = raw["doa_out"][0].shape[1]
    expected = {
        "embed1": (input_dim, hidden),
        "embed2": (hidden, hidden),
        "doa_hidden": (hidden, hidden),
        "doa_out": (hidden, num_doa),
        "sec_hidden": (hidden, hidden),
        "sec_out": (hidden, num_classes),
    }
    for name, shape in expected.items():
        if raw[name][0].shape != shape:
            raise FormatError(
                f"{path}: layer {name} has shape {raw[name][0].shape}, expected {shape}"
            )

    model = SLCNet(
        input_dim=input_dim,
        hidden=hidden,
        num_classes=num_classes,
        num_doa=num_doa,
    )
    for name in LAYER_ORDER:
        w, b, gamma, beta, run_mean, run_var = raw[name]
        layer = model.params[name]
        layer["w"] = w
        layer["b"] = b
        if name in BN_LAYERS:
            if np.any(run_var <= 0):
                raise FormatError(f"{path}: layer {name} running variance must be positive")
            layer["gamma"] = gamma
            layer["beta"] = beta
            layer["run_mean"] = run_mean
            layer["run_var"] = run_var
    return model


class AdamState:
    """Adam optimizer state (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected)."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params, grads, lr: float) -> None:
        """Update nested {layer: {key: array}} params in place from matching grads."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for layer, layer_grads in grads.items():
            for key, g in layer_grads.items():
                slot = (layer, key)
                if slot not in self.m:
                    self.m[slot] = np.zeros_like(g)
                    self.v[slot] = np.zeros_like(g)
                m = self.m[slot]
                v = self.v[slot]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                params[layer][key] -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params, grads, state: AdamState, lr: float) -> AdamState:
    """Functional wrapper over AdamState.step for one update."""
    state.step(params, grads, lr)
    return state
