"""Trainable spectral vector-field operator and its flow-matching training loop.

The vector field is a Fourier neural operator acting on the noised field
concatenated with relative grid coordinates and a sinusoidal embedding of the
flow time. All tensors are float64 on CPU; parameters are exposed as a flat
vector so checkpoints and gradients have a stable layout. Spectral transforms
use forward-normalized FFTs, which keeps the operator discretization
invariant on bandlimited inputs.
"""

from __future__ import annotations

import itertools
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .grid import Domain, GridFunction
from .io import CorruptFileError
from .noise import NoiseSpec, sample_noise

MODEL_MAGIC = b"ECIM"
MODEL_VERSION = 1

torch.set_default_dtype(torch.float64)


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class ModelConfig:
    ndim: int = 2
    layer_count: int = 2
    modes: tuple[int, ...] = (8, 8)
    width: int = 32
    projection_width: int = 128
    time_embed_dim: int = 16
    bounds: tuple[tuple[float, float], ...] | None = None  # training-domain signature

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if self.bounds is not None:
            object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))
        if len(self.modes) != self.ndim:
            raise ValueError("one mode cutoff per axis required")
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time embedding dimension must be even")

    @property
    def in_channels(self) -> int:
        return 1 + self.ndim + self.time_embed_dim


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    iterations: int = 2000
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_interval: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class TrainReport:
    loss_curve: list[tuple[int, float]]
    final_loss: float
    wall_clock: float
    seed: int
    config: dict = field(default_factory=dict)


class _SpectralConv(nn.Module):
    """Complex mode mixing on the truncated rfftn corner blocks."""

    def __init__(self, width: int, modes: tuple[int, ...]):
        super().__init__()
        self.modes = modes
        self.n_blocks = 2 ** (len(modes) - 1)
        self.weight = nn.Parameter(
            torch.zeros(self.n_blocks, width, width, *modes, 2, dtype=torch.float64)
        )
        d = len(modes)
        letters = "xyzw"[:d]
        self._subscript = f"bi{letters},io{letters}->bo{letters}"

    def _block_slices(self):
        d = len(self.modes)
        lowhigh = [(slice(0, m), slice(-m, None)) for m in self.modes[:-1]]
        for combo in itertools.product(*lowhigh):
            yield combo + (slice(0, self.modes[-1]),)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, C, *spatial)
        spatial_dims = tuple(range(2, x.ndim))
        spatial_shape = x.shape[2:]
        ft = torch.fft.rfftn(x, dim=spatial_dims, norm="forward")
        out = torch.zeros_like(ft)
        w = torch.view_as_complex(self.weight)
        for b, slices in enumerate(self._block_slices()):
            idx = (slice(None), slice(None)) + slices
            out[idx] = torch.einsum(self._subscript, ft[idx], w[b])
        return torch.fft.irfftn(out, s=spatial_shape, dim=spatial_dims, norm="forward")


def _pointwise(linear: nn.Linear, x: torch.Tensor) -> torch.Tensor:
    """Apply a channel-mixing linear layer to a channels-first tensor."""
    return linear(x.movedim(1, -1)).movedim(-1, 1)


class _FNO(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.lift = nn.Linear(cfg.in_channels, cfg.width)
        self.spectral = nn.ModuleList(
            _SpectralConv(cfg.width, cfg.modes) for _ in range(cfg.layer_count)
        )
        self.skips = nn.ModuleList(
            nn.Linear(cfg.width, cfg.width) for _ in range(cfg.layer_count)
        )
        self.proj_hidden = nn.Linear(cfg.width, cfg.projection_width)
        self.proj_out = nn.Linear(cfg.projection_width, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, C, *spatial) -> (B, 1, *spatial)
        h = _pointwise(self.lift, x)
        last = len(self.spectral) - 1
        for i, (spec, skip) in enumerate(zip(self.spectral, self.skips)):
            h = spec(h) + _pointwise(skip, h)
            if i < last:
                h = torch.nn.functional.gelu(h)
        h = torch.nn.functional.gelu(_pointwise(self.proj_hidden, h))
        return _pointwise(self.proj_out, h)


def _time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of flow time, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(torch.linspace(0.0, math.log(1000.0), half, dtype=torch.float64))
    args = t[:, None] * freqs[None, :] * 2.0 * math.pi
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class SpectralVectorField:
    """The trainable operator v(u_t, t) on grid functions."""

    def __init__(self, config: ModelConfig, net: _FNO | None = None):
        self.config = config
        self.net = net if net is not None else _FNO(config)

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "SpectralVectorField":
        """Fresh model with all parameters drawn from the given generator."""
        model = cls(config)
        spec_std = (2.0 / config.width) / float(np.prod(config.modes))
        with torch.no_grad():
            for name, p in model.net.named_parameters():
                if "spectral" in name:
                    p.copy_(torch.from_numpy(rng.normal(0.0, spec_std, size=tuple(p.shape))))
                else:
                    fan_in = p.shape[-1] if p.ndim > 1 else max(p.shape[0], 1)
                    bound = 1.0 / math.sqrt(fan_in)
                    p.copy_(torch.from_numpy(rng.uniform(-bound, bound, size=tuple(p.shape))))
        return model

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def parameters_vector(self) -> np.ndarray:
        return torch.nn.utils.parameters_to_vector(self.net.parameters()).detach().numpy().copy()

    def set_parameters_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_parameters:
            raise ValueError("parameter vector has the wrong length")
        torch.nn.utils.vector_to_parameters(torch.from_numpy(vec.copy()), self.net.parameters())

    def _check_resolution(self, domain: Domain) -> None:
        if domain.ndim != self.config.ndim:
            raise ValueError("domain rank does not match the model")
        for res, m in zip(domain.shape, self.config.modes):
            if res < 2 * m:
                raise ValueError(f"resolution {res} below twice the mode cutoff {m}")

    def _features(self, vals: torch.Tensor, domain: Domain, t: torch.Tensor) -> torch.Tensor:
        """Stack field, relative coordinates, and time embedding channels."""
        batch = vals.shape[0]
        shape = domain.shape
        channels = [vals[:, None]]
        for i in range(domain.ndim):
            axis = (torch.linspace(0.0, 1.0, shape[i], dtype=torch.float64)).reshape(
                [1] * i + [shape[i]] + [1] * (domain.ndim - i - 1)
            )
            channels.append(axis.expand(shape)[None, None].expand(batch, 1, *shape))
        emb = _time_embedding(t, self.config.time_embed_dim)  # (B, E)
        emb = emb.reshape(batch, -1, *([1] * domain.ndim)).expand(batch, emb.shape[1], *shape)
        return torch.cat(channels + [emb], dim=1)

    def forward_batch(self, vals: torch.Tensor, domain: Domain, t: torch.Tensor) -> torch.Tensor:
        """Batched forward pass on raw tensors, shape (B, *grid) -> (B, *grid)."""
        self._check_resolution(domain)
        return self.net(self._features(vals, domain, t))[:, 0]

    def __call__(self, u: GridFunction, t: float) -> GridFunction:
        with torch.no_grad():
            vals = torch.from_numpy(u.grid.copy())[None]
            out = self.forward_batch(vals, u.domain, torch.tensor([float(t)]))
        return GridFunction(u.domain, out[0].numpy())


def forward(model: SpectralVectorField, u: GridFunction, t: float) -> GridFunction:
    return model(u, t)


def ffm_loss(model, u0: GridFunction, u1: GridFunction, t: float) -> float:
    """Squared discrepancy between the predicted field and the displacement u1 - u0.

    ``model`` may be any callable mapping (GridFunction, t) to a GridFunction.
    """
    u_t = (1.0 - t) * u0 + t * u1
    v = model(u_t, t)
    target = u1 - u0
    return float(np.mean((v.values - target.values) ** 2))


def _batch_loss(
    model: SpectralVectorField,
    u0s: torch.Tensor,
    u1s: torch.Tensor,
    ts: torch.Tensor,
    domain: Domain,
) -> torch.Tensor:
    shape = [-1] + [1] * domain.ndim
    tt = ts.reshape(shape)
    u_t = (1.0 - tt) * u0s + tt * u1s
    v = model.forward_batch(u_t, domain, ts)
    return torch.mean((v - (u1s - u0s)) ** 2)


def gradient(model: SpectralVectorField, batch: list[tuple[GridFunction, GridFunction, float]]) -> np.ndarray:
    """Exact gradient of the batch-mean flow-matching loss in the parameters."""
    if not batch:
        raise ValueError("need a nonempty batch")
    domain = batch[0][0].domain
    u0s = torch.stack([torch.from_numpy(u0.grid.copy()) for u0, _, _ in batch])
    u1s = torch.stack([torch.from_numpy(u1.grid.copy()) for _, u1, _ in batch])
    ts = torch.tensor([float(t) for _, _, t in batch])
    model.net.zero_grad(set_to_none=True)
    loss = _batch_loss(model, u0s, u1s, ts, domain)
    loss.backward()
    grads = [
        p.grad if p.grad is not None else torch.zeros_like(p) for p in model.net.parameters()
    ]
    return torch.cat([g.reshape(-1) for g in grads]).numpy().copy()


def train(
    model: SpectralVectorField,
    dataset: list[GridFunction],
    noise_spec: NoiseSpec,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[SpectralVectorField, TrainReport]:
    """Adam training of the flow-matching objective; deterministic given the seed."""
    if not dataset:
        raise ValueError("dataset is empty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    domain = dataset[0].domain
    data = torch.stack([torch.from_numpy(f.grid.copy()) for f in dataset])
    opt = torch.optim.Adam(
        model.net.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
    )
    curve: list[tuple[int, float]] = []
    final_loss = float("nan")
    start = time.perf_counter()
    for it in range(cfg.iterations):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        ts = torch.from_numpy(rng.uniform(0.0, 1.0, size=cfg.batch_size))
        u0s = torch.stack(
            [torch.from_numpy(sample_noise(domain, noise_spec, rng).grid) for _ in range(cfg.batch_size)]
        )
        u1s = data[torch.from_numpy(idx)]
        opt.zero_grad(set_to_none=True)
        loss = _batch_loss(model, u0s, u1s, ts, domain)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"loss became non-finite at iteration {it}")
        loss.backward()
        opt.step()
        final_loss = float(loss.detach())
        if it % cfg.log_interval == 0 or it == cfg.iterations - 1:
            curve.append((it, final_loss))
    report = TrainReport(
        loss_curve=curve,
        final_loss=final_loss,
        wall_clock=time.perf_counter() - start,
        seed=cfg.seed,
        config=asdict(cfg),
    )
    return model, report


def save_model(model: SpectralVectorField, path) -> None:
    cfg = model.config
    meta = {
        "ndim": cfg.ndim,
        "layer_count": cfg.layer_count,
        "modes": list(cfg.modes),
        "width": cfg.width,
        "projection_width": cfg.projection_width,
        "time_embed_dim": cfg.time_embed_dim,
        "bounds": [list(b) for b in cfg.bounds] if cfg.bounds is not None else None,
        "param_count": model.n_parameters,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(model.parameters_vector().astype("<f8").tobytes())


def load_model(path) -> SpectralVectorField:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise CorruptFileError(f"{path}: not a model file")
    version, meta_len = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise CorruptFileError(f"{path}: unsupported model version {version}")
    if len(data) < 12 + meta_len:
        raise CorruptFileError(f"{path}: truncated metadata")
    meta = json.loads(data[12 : 12 + meta_len])
    cfg = ModelConfig(
        ndim=meta["ndim"],
        layer_count=meta["layer_count"],
        modes=tuple(meta["modes"]),
        width=meta["width"],
        projection_width=meta["projection_width"],
        time_embed_dim=meta["time_embed_dim"],
        bounds=tuple(tuple(b) for b in meta["bounds"]) if meta["bounds"] else None,
    )
    model = SpectralVectorField(cfg)
    expected = 12 + meta_len + 8 * meta["param_count"]
    if len(data) != expected or meta["param_count"] != model.n_parameters:
        raise CorruptFileError(f"{path}: parameter block has the wrong size")
    vec = np.frombuffer(data, dtype="<f8", count=meta["param_count"], offset=12 + meta_len)
    model.set_parameters_vector(vec)
    return model
