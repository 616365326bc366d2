"""Neural implicit classifier: random Fourier features, softplus MLP, TV loss.

The field ``f`` is trained to be +1 on skeleton A and -1 on skeleton B while
penalising the mean gradient norm over the domain.  By the coarea formula the
latter is the integrated area of all level sets, so the zero set is pulled
towards an area-minimising separator.

All network computations happen in normalised coordinates ``u = (x - origin)
* scale`` that map the domain bbox into the unit cube (aspect preserved).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._random import make_rng
from .domain import DomainSampler
from .exceptions import EmptySkeleton, NonFiniteLoss

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
# keeps d/dg ||g|| finite where the field is flat
_NORM_EPS = 1e-20
_EVAL_CHUNK = 65536


def _torch_dtype(name):
    return {"float32": torch.float32, "float64": torch.float64}[name]


class FourierEncoder(torch.nn.Module):
    """``x -> [sin(2 pi B x), cos(2 pi B x)]`` with a frozen ``(m, 3)`` matrix B."""

    def __init__(self, B):
        super().__init__()
        self.register_buffer("B", torch.as_tensor(B))

    @property
    def m(self):
        return self.B.shape[0]

    def phases(self, u):
        return TWO_PI * (u @ self.B.T)

    def forward(self, u):
        z = self.phases(u)
        return torch.cat([torch.sin(z), torch.cos(z)], dim=1)

    def backprop(self, u, dfeat):
        """Pull a feature-space covector ``dfeat`` (n, 2m) back to ``u``."""
        z = self.phases(u)
        ds, dc = dfeat[:, : self.m], dfeat[:, self.m:]
        return TWO_PI * ((ds * torch.cos(z) - dc * torch.sin(z)) @ self.B)


class FieldModel(torch.nn.Module):
    """Scalar field ``f(x) = affine o softplus-MLP o encode(normalise(x))``.

    ``origin`` and ``scale`` define the world-to-unit-cube map.  Parameters
    are initialised from a Philox stream keyed on ``seed``: scaled uniform
    ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` for weights and hidden biases,
    zero for the output bias.
    """

    def __init__(self, n_frequencies=1024, hidden_width=256, n_hidden=3,
                 fourier_scale=6.0, seed=0, origin=(0.0, 0.0, 0.0), scale=1.0,
                 dtype=torch.float32, B=None):
        super().__init__()
        rng = make_rng(seed, "field_init")
        if B is None:
            B = rng.normal(0.0, fourier_scale, size=(n_frequencies, 3))
        self.encoder = FourierEncoder(torch.as_tensor(np.asarray(B), dtype=dtype))
        dims = [2 * self.encoder.m] + [hidden_width] * n_hidden + [1]
        self.layers = torch.nn.ModuleList()
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            layer = torch.nn.Linear(fan_in, fan_out, dtype=dtype)
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                layer.weight.copy_(torch.from_numpy(rng.uniform(-bound, bound, (fan_out, fan_in))))
                layer.bias.copy_(torch.from_numpy(rng.uniform(-bound, bound, fan_out)))
            self.layers.append(layer)
        with torch.no_grad():
            self.layers[-1].bias.zero_()
        self.origin = tuple(float(v) for v in origin)
        self.scale = float(scale)
        self.seed = seed

    @property
    def dtype(self):
        return self.encoder.B.dtype

    @property
    def layer_dims(self):
        return [self.layers[0].in_features] + [layer.out_features for layer in self.layers]

    def normalize(self, x):
        x = torch.as_tensor(x, dtype=self.dtype)
        return (x - torch.tensor(self.origin, dtype=self.dtype)) * self.scale

    # ---- normalised-coordinate core

    def net(self, u):
        h = self.encoder(u)
        for layer in self.layers[:-1]:
            h = F.softplus(layer(h))
        return self.layers[-1](h)[:, 0]

    def net_and_grad(self, u):
        """Value and exact ``grad_u f`` by a hand-written reverse sweep.

        The sweep is ordinary torch arithmetic, so autograd can differentiate
        the returned gradient with respect to the parameters.
        """
        h = self.encoder(u)
        slopes = []
        for layer in self.layers[:-1]:
            pre = layer(h)
            slopes.append(torch.sigmoid(pre))
            h = F.softplus(pre)
        out = self.layers[-1](h)[:, 0]
        g = self.layers[-1].weight.expand(len(u), -1)
        for layer, slope in zip(reversed(self.layers[:-1]), reversed(slopes)):
            g = (g * slope) @ layer.weight
        return out, self.encoder.backprop(u, g)

    # ---- world coordinates

    def forward(self, x):
        return self.net(self.normalize(x))

    def field_and_gradient(self, x):
        f, g = self.net_and_grad(self.normalize(x))
        return f, g * self.scale

    def spatial_gradient(self, x):
        return self.field_and_gradient(x)[1]

    def parameter_vector(self):
        return torch.cat([p.detach().reshape(-1) for p in self.parameters()])


def softplus(x):
    return F.softplus(torch.as_tensor(x, dtype=torch.float64))


def forward(model, p):
    """Evaluate ``model`` at world point(s) ``p`` (float64 numpy out)."""
    pts = np.atleast_2d(np.asarray(p, dtype=np.float64))
    with torch.no_grad():
        out = model(pts).double().numpy()
    return out[0] if np.ndim(p) == 1 else out


def spatial_gradient(model, p):
    pts = np.atleast_2d(np.asarray(p, dtype=np.float64))
    with torch.no_grad():
        out = model.spatial_gradient(pts).double().numpy()
    return out[0] if np.ndim(p) == 1 else out


# ---------------------------------------------------------------- samples


@dataclass(frozen=True, eq=False)
class SkeletonSamples:
    """Labelled training points: ``points_a`` target +1, ``points_b`` target -1."""

    points_a: np.ndarray
    points_b: np.ndarray
    density: float = 8.0

    def __post_init__(self):
        for name in ("points_a", "points_b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1, 3)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_skeletons(cls, skel_a, skel_b, density=8.0):
        """Vertices plus points along every edge, ``density`` per mean edge length."""
        segs = [s.segments for s in (skel_a, skel_b)]
        lengths = np.concatenate([np.linalg.norm(s[:, 1] - s[:, 0], axis=1) for s in segs])
        spacing = lengths.mean() / density if len(lengths) else 1.0
        return cls(_densify(skel_a.vertices, segs[0], spacing),
                   _densify(skel_b.vertices, segs[1], spacing), density)

    def check(self):
        if len(self.points_a) == 0 or len(self.points_b) == 0:
            raise EmptySkeleton("both skeleton sample sets must be nonempty")


def _densify(vertices, segments, spacing):
    out = [np.asarray(vertices, dtype=np.float64).reshape(-1, 3)]
    for a, b in segments:
        k = int(math.ceil(np.linalg.norm(b - a) / spacing))
        if k > 1:
            t = np.arange(1, k)[:, None] / k
            out.append((1 - t) * a + t * b)
    return np.concatenate(out)


def augment(points, sigma, seed=0, step=0):
    """Add i.i.d. ``N(0, sigma^2)`` offsets; the stream is keyed on ``(seed, step)``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    pts = np.asarray(points, dtype=np.float64)
    if sigma == 0:
        return pts.copy()
    rng = make_rng(seed, "augment", step)
    return pts + rng.normal(0.0, sigma, size=pts.shape)


# ---------------------------------------------------------------- losses


def skeleton_term(f_a, f_b):
    """Mean ``|f - 1|`` over A plus mean ``|f + 1|`` over B, accumulated in double."""
    if f_a.numel() == 0 or f_b.numel() == 0:
        raise EmptySkeleton("both skeleton sample sets must be nonempty")
    return (f_a - 1).abs().double().mean() + (f_b + 1).abs().double().mean()


def smooth_term(grad):
    return torch.sqrt((grad * grad).sum(dim=1) + _NORM_EPS).double().mean()


def loss_skeleton(model, samples):
    samples.check()
    return skeleton_term(model(samples.points_a), model(samples.points_b))


def loss_smooth(model, omega):
    """Mean world-space gradient norm over ``omega``."""
    _, g = model.field_and_gradient(np.asarray(omega, dtype=np.float64))
    return smooth_term(g)


def total_loss(model, u_a, u_b, u_omega, lambda_skeleton, lambda_smooth):
    """Weighted loss on normalised-coordinate batches; returns (total, skel, smooth)."""
    l_skel = skeleton_term(model.net(u_a), model.net(u_b))
    _, g = model.net_and_grad(u_omega)
    l_smooth = smooth_term(g)
    return lambda_skeleton * l_skel + lambda_smooth * l_smooth, l_skel, l_smooth


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    lambda_skeleton: float = 5000.0
    lambda_smooth: float = 1.0
    learning_rate: float = 3e-5
    # final / initial learning rate, geometric in between; 1 keeps it constant
    lr_decay: float = 1.0
    iterations: int = 51200
    omega_batch: int = 32768
    skeleton_batch: int = 8192
    noise_sigma: float = 0.002
    n_frequencies: int = 1024
    hidden_width: int = 256
    n_hidden: int = 3
    fourier_scale: float = 6.0
    omega_pool: int = 0
    trace_stride: int = 100
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lambda_skeleton < 0 or self.lambda_smooth < 0:
            raise ValueError("loss weights must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        positive = ("iterations", "omega_batch", "skeleton_batch", "n_frequencies",
                    "hidden_width", "n_hidden", "trace_stride")
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.omega_pool < 0:
            raise ValueError("omega_pool must be >= 0")
        if not self.fourier_scale > 0:
            raise ValueError("fourier_scale must be > 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        return self

    @classmethod
    def desk(cls, **overrides):
        """Reduced settings that finish in minutes on one CPU core.

        With only 128 frequencies the Fourier scale drops to 0.3: at scale 6
        nearly every feature is high frequency and the fit oscillates between
        the skeletons instead of flattening.
        """
        base = dict(n_frequencies=128, hidden_width=128, iterations=5000, omega_batch=4096,
                    skeleton_batch=2048, learning_rate=1e-3, fourier_scale=0.3)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, spec):
        known = {f.name for f in fields(cls)}
        unknown = set(spec) - known
        if unknown:
            raise ValueError(f"unknown train options: {sorted(unknown)}")
        return cls(**spec)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Normalization:
    origin: tuple
    scale: float

    @classmethod
    def from_bbox(cls, lo, hi):
        extent = float(np.max(np.asarray(hi, float) - np.asarray(lo, float)))
        if not extent > 0:
            raise ValueError("bounding box has no extent")
        return cls(tuple(float(v) for v in lo), 1.0 / extent)

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - np.asarray(self.origin)) * self.scale


TRACE_COLUMNS = ("iteration", "skeleton_loss", "smooth_loss", "total_loss")


def _minibatch(points, size, rng):
    if len(points) <= size:
        return points
    return points[rng.integers(0, len(points), size)]


def train(skeletons, domain, cfg, callback=None):
    """Fit a :class:`FieldModel` with Adam; returns ``(model, trace_rows)``.

    ``domain=None`` means the bbox of the skeleton points is the domain.
    """
    cfg.validate()
    skeletons.check()
    dtype = _torch_dtype(cfg.dtype)
    if domain is not None:
        norm = Normalization.from_bbox(*domain.bbox)
        sampler = DomainSampler(domain, seed=make_rng(cfg.seed, "omega_probe").integers(2 ** 63))
    else:
        both = np.concatenate([skeletons.points_a, skeletons.points_b])
        norm = Normalization.from_bbox(both.min(0), both.max(0))
        sampler = None
    model = FieldModel(cfg.n_frequencies, cfg.hidden_width, cfg.n_hidden, cfg.fourier_scale,
                       seed=cfg.seed, origin=norm.origin, scale=norm.scale, dtype=dtype)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                           betas=(0.9, 0.999), eps=1e-8)
    gamma = cfg.lr_decay ** (1.0 / max(cfg.iterations - 1, 1))
    u_a, u_b = norm.apply(skeletons.points_a), norm.apply(skeletons.points_b)
    pool = None
    if cfg.omega_pool:
        pool = norm.apply(_draw_omega(sampler, cfg.omega_pool, make_rng(cfg.seed, "omega_pool"),
                                      norm))

    trace = []
    for it in range(cfg.iterations):
        rng = make_rng(cfg.seed, "train_step", it)
        if pool is not None:
            omega = pool[rng.integers(0, len(pool), cfg.omega_batch)]
        else:
            omega = norm.apply(_draw_omega(sampler, cfg.omega_batch, rng, norm))
        batch_a = _minibatch(u_a, cfg.skeleton_batch, rng)
        batch_b = _minibatch(u_b, cfg.skeleton_batch, rng)
        if cfg.noise_sigma > 0:
            batch_a = batch_a + rng.normal(0.0, cfg.noise_sigma, batch_a.shape)
            batch_b = batch_b + rng.normal(0.0, cfg.noise_sigma, batch_b.shape)
        loss, l_skel, l_smooth = total_loss(
            model, torch.as_tensor(batch_a, dtype=dtype), torch.as_tensor(batch_b, dtype=dtype),
            torch.as_tensor(omega, dtype=dtype), cfg.lambda_skeleton, cfg.lambda_smooth)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(it)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if gamma != 1.0:
            for group in opt.param_groups:
                group["lr"] *= gamma
        if it % cfg.trace_stride == 0 or it == cfg.iterations - 1:
            row = (it, l_skel.item(), l_smooth.item(), loss.item())
            trace.append(row)
            log.info("iter %d  skeleton %.5f  smooth %.5f", *row[:3])
            if callback is not None:
                callback(row)
    model.eval()
    return model, trace


def _draw_omega(sampler, n, rng, norm):
    if sampler is not None:
        return sampler.sample(n, rng)
    lo = np.asarray(norm.origin)
    return lo + rng.random((n, 3)) / norm.scale


def save_trace(trace, path, meta=None):
    with open(path, "w", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for it, sk, sm, tot in trace:
            writer.writerow([it, repr(sk), repr(sm), repr(tot)])


def load_trace(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    return [(int(r["iteration"]), float(r["skeleton_loss"]), float(r["smooth_loss"]),
             float(r["total_loss"])) for r in reader]


# ---------------------------------------------------------------- checkpoint

MAGIC = b"DMSF"
CHECKPOINT_VERSION = 1


def save_checkpoint(model, path, meta=None):
    """Binary layout, little-endian throughout.

    magic ``DMSF`` | u32 version | u32 meta length | meta (UTF-8 JSON) |
    u32 m | u32 number of layer dims | u32 dims... | f64 origin[3] | f64 scale |
    f32 B (m x 3, row-major) | per layer: f32 W (out x in, row-major), f32 b.
    """
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    dims = model.layer_dims
    parts = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(meta_bytes)), meta_bytes,
             struct.pack("<II", model.encoder.m, len(dims)), struct.pack(f"<{len(dims)}I", *dims),
             struct.pack("<4d", *model.origin, model.scale), _f32(model.encoder.B)]
    for layer in model.layers:
        parts += [_f32(layer.weight), _f32(layer.bias)]
    Path(path).write_bytes(b"".join(parts))


def _f32(t):
    return t.detach().cpu().numpy().astype("<f4").tobytes(order="C")


def load_checkpoint(path):
    """Read a checkpoint; returns ``(model, meta)`` with a float32 model."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a field checkpoint")
    version, meta_len = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    meta = json.loads(buf[pos:pos + meta_len].decode())
    pos += meta_len
    m, n_dims = struct.unpack_from("<II", buf, pos)
    pos += 8
    dims = struct.unpack_from(f"<{n_dims}I", buf, pos)
    pos += 4 * n_dims
    *origin, scale = struct.unpack_from("<4d", buf, pos)
    pos += 32

    def take(count, shape):
        nonlocal pos
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        return torch.from_numpy(arr.astype(np.float32))

    B = take(3 * m, (m, 3))
    model = FieldModel(m, dims[1], len(dims) - 2, origin=origin, scale=scale, B=B,
                       seed=meta.get("seed", 0))
    with torch.no_grad():
        for layer, fan_in, fan_out in zip(model.layers, dims[:-1], dims[1:]):
            layer.weight.copy_(take(fan_in * fan_out, (fan_out, fan_in)))
            layer.bias.copy_(take(fan_out, (fan_out,)))
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    model.eval()
    return model, meta


# ---------------------------------------------------------------- estimator


def evaluate(model, points, gradient=False):
    """Chunked no-grad evaluation at world points; float64 numpy out."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    vals, grads = [], []
    with torch.no_grad():
        for start in range(0, len(pts), _EVAL_CHUNK):
            chunk = pts[start:start + _EVAL_CHUNK]
            if gradient:
                f, g = model.field_and_gradient(chunk)
                grads.append(g.double().numpy())
            else:
                f = model(chunk)
            vals.append(f.double().numpy())
    f = np.concatenate(vals) if vals else np.zeros(0)
    return (f, np.concatenate(grads) if grads else np.zeros((0, 3))) if gradient else f


def _labels_to_sign(y):
    y = np.asarray(y)
    if y.dtype.kind in "US":
        bad = ~np.isin(y, ["A", "B"])
        if bad.any():
            raise ValueError("string labels must be 'A' or 'B'")
        return np.where(y == "A", 1, -1)
    y = y.astype(np.int64)
    if not np.all(np.isin(y, [-1, 1])):
        raise ValueError("numeric labels must be +1 (fluid A) or -1 (fluid B)")
    return y


class MinimalSurfaceField(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`train`.

    ``fit(X, y)`` takes labelled skeleton samples (+1 / 'A' and -1 / 'B').
    ``decision_function`` returns the field value, whose zero set is the
    separating surface; ``predict`` returns its sign.
    """

    def __init__(self, lambda_skeleton=5000.0, lambda_smooth=1.0, learning_rate=3e-5,
                 lr_decay=1.0, iterations=51200, omega_batch=32768, skeleton_batch=8192, noise_sigma=0.002,
                 n_frequencies=1024, hidden_width=256, n_hidden=3, fourier_scale=6.0,
                 omega_pool=0, trace_stride=100, dtype="float32", random_state=0):
        self.lambda_skeleton = lambda_skeleton
        self.lambda_smooth = lambda_smooth
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.iterations = iterations
        self.omega_batch = omega_batch
        self.skeleton_batch = skeleton_batch
        self.noise_sigma = noise_sigma
        self.n_frequencies = n_frequencies
        self.hidden_width = hidden_width
        self.n_hidden = n_hidden
        self.fourier_scale = fourier_scale
        self.omega_pool = omega_pool
        self.trace_stride = trace_stride
        self.dtype = dtype
        self.random_state = random_state

    @classmethod
    def from_config(cls, cfg):
        params = cfg.to_dict()
        params["random_state"] = params.pop("seed")
        return cls(**params)

    def config(self):
        params = self.get_params()
        params["seed"] = params.pop("random_state")
        return TrainConfig(**params)

    def fit(self, X, y, domain=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 3:
            raise ValueError("X must have 3 columns")
        sign = _labels_to_sign(y)
        if len(sign) != len(X):
            raise ValueError("X and y have different lengths")
        samples = SkeletonSamples(X[sign == 1], X[sign == -1])
        return self.fit_samples(samples, domain)

    def fit_samples(self, samples, domain=None):
        self.model_, self.loss_trace_ = train(samples, domain, self.config())
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = 3
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_array(X, dtype=np.float64))

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def gradient(self, X):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_array(X, dtype=np.float64), gradient=True)[1]
