"""Neural surrogate of the sPAM force-strain model.

A 2-32-2 ReLU perceptron maps ``(P_act, eps)`` to ``(F_t, m)`` for one fixed
actuator geometry. Inputs and outputs are min-max normalized with the
statistics of the training set. Training uses mini-batch Adam on the
normalized mean squared error with early stopping on a held-out split.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import spam
from .roots import NoConvergenceError

INPUT_DIM = 2
HIDDEN_DIM = 32
OUTPUT_DIM = 2

_DATASET_MAGIC = b"VSDSET\x00\x00"
_MODEL_MAGIC = b"VSMLP\x00\x00\x00"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Validation error stayed above the requested bound."""


class FormatError(ValueError):
    """A dataset or model file is malformed."""


@dataclass(frozen=True)
class SurrogateSpec:
    input_dim: int = INPUT_DIM
    hidden_dim: int = HIDDEN_DIM
    output_dim: int = OUTPUT_DIM
    activation: str = "relu"

    def __post_init__(self):
        if (self.input_dim, self.hidden_dim, self.output_dim) != (2, 32, 2):
            raise ValueError("surrogate architecture is fixed at 2x32x2")
        if self.activation != "relu":
            raise ValueError("only rectifier activations are supported")


def _span(lo, hi):
    span = hi - lo
    return np.where(span > 0, span, 1.0)


@dataclass
class Dataset:
    """Raw ``[P_act, eps]`` inputs and ``[F_t, m]`` outputs plus min/max stats."""

    inputs: np.ndarray
    outputs: np.ndarray
    in_min: np.ndarray
    in_max: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray
    geometry: spam.SpamGeometry = field(default_factory=spam.SpamGeometry)
    seed: int = 0

    @classmethod
    def from_raw(cls, inputs, outputs, geometry=None, seed=0):
        inputs = np.ascontiguousarray(inputs, dtype=float)
        outputs = np.ascontiguousarray(outputs, dtype=float)
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
            raise ValueError("dataset contains non-finite values")
        return cls(inputs, outputs, inputs.min(0), inputs.max(0),
                   outputs.min(0), outputs.max(0),
                   geometry or spam.SpamGeometry(), int(seed))

    def __len__(self):
        return len(self.inputs)

    @property
    def x(self):
        return (self.inputs - self.in_min) / _span(self.in_min, self.in_max)

    @property
    def y(self):
        return (self.outputs - self.out_min) / _span(self.out_min, self.out_max)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_DATASET_MAGIC)
        buf.write(struct.pack("<IQII", FORMAT_VERSION, len(self), INPUT_DIM, OUTPUT_DIM))
        g = self.geometry
        buf.write(struct.pack("<4dq", g.R_c, g.R_act, g.l_0, g.a_corr, self.seed))
        for arr in (self.in_min, self.in_max, self.out_min, self.out_max):
            buf.write(np.asarray(arr, "<f8").tobytes())
        # columnar payload
        for j in range(INPUT_DIM):
            buf.write(np.ascontiguousarray(self.inputs[:, j], "<f8").tobytes())
        for j in range(OUTPUT_DIM):
            buf.write(np.ascontiguousarray(self.outputs[:, j], "<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:8] != _DATASET_MAGIC:
            raise FormatError("not a dataset file")
        off = 8
        version, n, di, do = struct.unpack_from("<IQII", data, off)
        off += struct.calcsize("<IQII")
        if version != FORMAT_VERSION or (di, do) != (INPUT_DIM, OUTPUT_DIM):
            raise FormatError(f"unsupported dataset version/shape {version} {di}x{do}")
        rc, ra, l0, a, seed = struct.unpack_from("<4dq", data, off)
        off += struct.calcsize("<4dq")
        stats = []
        for k in (di, di, do, do):
            stats.append(np.frombuffer(data, "<f8", k, off).astype(float))
            off += 8 * k
        expected = off + 8 * n * (di + do)
        if len(data) != expected:
            raise FormatError(f"dataset payload has {len(data)} bytes, expected {expected}")
        cols = np.frombuffer(data, "<f8", n * (di + do), off).reshape(di + do, n)
        return cls(np.ascontiguousarray(cols[:di].T), np.ascontiguousarray(cols[di:].T),
                   *stats, geometry=spam.SpamGeometry(rc, ra, l0, a), seed=int(seed))


def generate_dataset(geom: spam.SpamGeometry, pressure_range, n: int, seed: int, *,
                     min_rows: int = 1000) -> Dataset:
    """Solve the sPAM model on a jittered stratified ``(P_act, m)`` grid.

    Rows are laid out pressure-major. The last contraction stratum of every
    pressure row is pinned at ``m = 0.5`` so the zero-force limit is always
    represented. ``min_rows`` guards against datasets too small to train on;
    lower it only for smoke runs.
    """
    if n < max(min_rows, 4):
        raise ValueError(f"dataset needs at least {max(min_rows, 4)} rows")
    p_lo, p_hi = map(float, pressure_range)
    if not (0 < p_lo < p_hi):
        raise ValueError("pressure range must satisfy 0 < lo < hi")
    rng = np.random.default_rng(seed)
    n_p = max(2, int(round(np.sqrt(n / 4.0))))
    n_m = int(np.ceil(n / n_p))
    pu = (np.arange(n_p)[:, None] + rng.random((n_p, n_m))) / n_p
    mu = (np.arange(n_m)[None, :] + rng.random((n_p, n_m))) / n_m
    mu[:, -1] = 1.0
    P = p_lo + (p_hi - p_lo) * pu
    m0 = spam.zero_strain_m(geom)
    # strata evenly spaced in sqrt-space spread strain more uniformly
    m = m0 + (spam.M_MAX - m0) * mu ** 2
    m = np.clip(m, m0, spam.M_MAX)
    P, m = P.ravel()[:n], m.ravel()[:n]
    try:
        sol = spam.solve_batch(geom, m)
    except NoConvergenceError as exc:
        raise NoConvergenceError(f"dataset generation failed: {exc}") from exc
    bad = (sol["eps"] < -1e-12) | (sol["l_a"] > geom.l_0 * (1 + 1e-12))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise spam.InfeasibleError(f"infeasible sPAM state at P={P[i]}, m={m[i]}")
    eps = np.maximum(sol["eps"], 0.0)
    ft = P * sol["f_per_p"]
    return Dataset.from_raw(np.column_stack([P, eps]), np.column_stack([ft, m]), geom, seed)


@dataclass
class SurrogateModel:
    W1: np.ndarray  # (2, 32)
    b1: np.ndarray
    W2: np.ndarray  # (32, 2)
    b2: np.ndarray
    in_min: np.ndarray
    in_max: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray
    geometry: spam.SpamGeometry = field(default_factory=spam.SpamGeometry)
    history: dict = field(default_factory=dict, compare=False)

    def forward_normalized(self, x):
        """Evaluate on normalized inputs. Accumulation order is fixed per row,
        so a row's output is independent of the batch it is evaluated in."""
        x = np.asarray(x, dtype=float)
        h = self.b1 + x[:, 0:1] * self.W1[0] + x[:, 1:2] * self.W1[1]
        h = np.maximum(h, 0.0)
        out = np.broadcast_to(self.b2, (len(x), OUTPUT_DIM)).copy()
        for k in range(HIDDEN_DIM):
            out += h[:, k:k + 1] * self.W2[k]
        return out

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_MODEL_MAGIC)
        buf.write(struct.pack("<I3I8s", FORMAT_VERSION, INPUT_DIM, HIDDEN_DIM,
                              OUTPUT_DIM, b"relu\x00\x00\x00\x00"))
        g = self.geometry
        buf.write(struct.pack("<4d", g.R_c, g.R_act, g.l_0, g.a_corr))
        for arr in (self.in_min, self.in_max, self.out_min, self.out_max,
                    self.W1, self.b1, self.W2, self.b2):
            buf.write(np.ascontiguousarray(arr, "<f8").tobytes())
        return buf.getvalue()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes):
        if data[:8] != _MODEL_MAGIC:
            raise FormatError("not a surrogate model file")
        off = 8
        version, di, dh, do, act = struct.unpack_from("<I3I8s", data, off)
        off += struct.calcsize("<I3I8s")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported model version {version}")
        if (di, dh, do) != (INPUT_DIM, HIDDEN_DIM, OUTPUT_DIM) or act.rstrip(b"\x00") != b"relu":
            raise FormatError("unsupported architecture")
        geom = spam.SpamGeometry(*struct.unpack_from("<4d", data, off))
        off += 32
        shapes = [(di,), (di,), (do,), (do,), (di, dh), (dh,), (dh, do), (do,)]
        arrays = []
        for shp in shapes:
            k = int(np.prod(shp))
            arrays.append(np.frombuffer(data, "<f8", k, off).reshape(shp).astype(float))
            off += 8 * k
        if off != len(data):
            raise FormatError("trailing bytes in model file")
        mn, mx, omn, omx, W1, b1, W2, b2 = arrays
        return cls(W1, b1, W2, b2, mn, mx, omn, omx, geom)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _he_init(rng):
    W1 = rng.normal(0.0, np.sqrt(2.0 / INPUT_DIM), (INPUT_DIM, HIDDEN_DIM))
    W2 = rng.normal(0.0, np.sqrt(2.0 / HIDDEN_DIM), (HIDDEN_DIM, OUTPUT_DIM))
    return [W1, np.zeros(HIDDEN_DIM), W2, np.zeros(OUTPUT_DIM)]


def _loss_grad(params, x, y):
    W1, b1, W2, b2 = params
    z = x @ W1 + b1
    h = np.maximum(z, 0.0)
    out = h @ W2 + b2
    err = out - y
    n = len(x)
    d_out = (2.0 / (n * OUTPUT_DIM)) * err
    gW2 = h.T @ d_out
    gb2 = d_out.sum(0)
    dh = d_out @ W2.T
    dh[z <= 0] = 0.0
    gW1 = x.T @ dh
    gb1 = dh.sum(0)
    return float(np.mean(err * err)), [gW1, gb1, gW2, gb2]


def _mse(params, x, y):
    W1, b1, W2, b2 = params
    out = np.maximum(x @ W1 + b1, 0.0) @ W2 + b2
    return float(np.mean((out - y) ** 2))


def train(spec: SurrogateSpec, data: Dataset, seed: int, *, epochs: int = 2000,
          batch_size: int = 256, lr: float = 3e-3, patience: int = 150,
          target_mse: float | None = None, mse_bound: float | None = 0.005,
          val_fraction: float = 0.1) -> SurrogateModel:
    """Fit the surrogate. Returns the weights with the best validation MSE.

    Training stops early after ``patience`` epochs without improvement or
    once validation MSE falls below ``target_mse``. Raises
    :class:`TrainingError` if the best validation MSE exceeds ``mse_bound``.
    """
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    SurrogateSpec(spec.input_dim, spec.hidden_dim, spec.output_dim, spec.activation)
    rng = np.random.default_rng(seed)
    x, y = data.x, data.y
    n = len(x)
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val, tr = perm[:n_val], perm[n_val:]
    xt, yt, xv, yv = x[tr], y[tr], x[val], y[val]

    params = _he_init(rng)
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    t = 0
    best = (_mse(params, xv, yv), [p.copy() for p in params], 0)
    since = 0
    train_curve, val_curve = [], []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(xt))
        running = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = _loss_grad(params, xt[idx], yt[idx])
            running += loss * len(idx)
            t += 1
            lr_t = lr * np.sqrt(1 - beta2 ** t) / (1 - beta1 ** t)
            for p, g, a, b in zip(params, grads, m1, m2):
                a *= beta1
                a += (1 - beta1) * g
                b *= beta2
                b += (1 - beta2) * g * g
                p -= lr_t * a / (np.sqrt(b) + adam_eps)
        v = _mse(params, xv, yv)
        train_curve.append(running / len(xt))
        val_curve.append(v)
        if v < best[0]:
            best = (v, [p.copy() for p in params], epoch)
            since = 0
        else:
            since += 1
        if since >= patience or (target_mse is not None and v <= target_mse):
            break
    val_mse, params, best_epoch = best
    W1, b1, W2, b2 = params
    model = SurrogateModel(W1, b1, W2, b2, data.in_min.copy(), data.in_max.copy(),
                           data.out_min.copy(), data.out_max.copy(), data.geometry)
    resid = model.forward_normalized(xt) - yt
    model.history = {
        "val_mse": val_mse, "best_epoch": best_epoch, "epochs_run": len(val_curve),
        "train_rows": len(tr), "val_rows": len(val),
        "train_resid_std": resid.std(0).tolist(),
        "train_curve": train_curve, "val_curve": val_curve,
    }
    if mse_bound is not None and val_mse > mse_bound:
        raise TrainingError(f"validation MSE {val_mse:.4g} above bound {mse_bound}")
    return model


def infer_batch(model: SurrogateModel, inputs, B: int | None = None, *,
                return_clamped: bool = False):
    """Predict ``[F_t, m]`` for rows of ``[P_act, eps]``.

    Inputs outside the training range are clamped to it; the number of
    clamped rows is returned as a second value when ``return_clamped``.
    ``B`` splits the work into chunks of that many rows; the result does not
    depend on it.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    clipped = np.clip(x, model.in_min, model.in_max)
    n_clamped = int(np.count_nonzero(np.any(clipped != x, axis=1)))
    xn = (clipped - model.in_min) / _span(model.in_min, model.in_max)
    if B is None or B >= len(xn):
        yn = model.forward_normalized(xn)
    else:
        yn = np.concatenate([model.forward_normalized(xn[i:i + B])
                             for i in range(0, len(xn), B)])
    out = model.out_min + yn * _span(model.out_min, model.out_max)
    return (out, n_clamped) if return_clamped else out


def numeric_solve(geom: spam.SpamGeometry, P_act: float, eps: float):
    """Ground-truth ``(F_t, m)`` for one ``(P_act, eps)`` by inverting the
    model in ``m``."""
    r = spam.invert_strain(geom, eps)
    return float(P_act * r["f_per_p"][0]), float(r["m"][0])
