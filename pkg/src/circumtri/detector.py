"""The trainable circumcenter detector.

Architecture: positional encoding of the normalized neighbor coordinates, a
shared per-point MLP, one star-graph depthwise-separable convolution that
pools the K neighbors into a global patch feature, and an MLP head emitting a
(t, s, 4) tensor per patch: a confidence logit plus three step-normalized
offset coordinates for each of s slots in each of t anchor cells.

Training uses binary cross-entropy over cell/slot occupancy with hard
negative mining at a fixed positive:negative ratio, plus a smooth-L1
localization loss where the s predictions of a positive cell are matched to
the ground-truth circumcenters by the minimum-cost assignment.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .anchors import AnchorGrid, build_grid
from .autodiff import Tensor, parameter, sigmoid
from .errors import CheckpointError, NoPositives, NonFiniteLoss

CHECKPOINT_MAGIC = b"CIRC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DetectorConfig:
    """Hyperparameters of the detector network and its losses."""

    pe_levels: int = 16
    include_raw_xyz: bool = True
    depth_multiplier: int = 16
    point_mlp: tuple = (64, 128)
    conv_out: int = 256
    head_mlp: tuple = (256, 256)
    slots_per_cell: int = 2
    lambda_loc: float = 1.0
    neg_ratio: float = 20.0
    logit_clip: float = 30.0

    def __post_init__(self):
        if self.slots_per_cell < 1:
            raise ValueError("slots_per_cell must be >= 1")
        if self.pe_levels < 1:
            raise ValueError("pe_levels must be >= 1")
        if any(w <= 0 for w in tuple(self.point_mlp) + tuple(self.head_mlp)):
            raise ValueError("widths must be positive")
        if self.lambda_loc < 0:
            raise ValueError("lambda_loc must be >= 0")

    @property
    def feature_dim(self) -> int:
        return 6 * self.pe_levels + (3 if self.include_raw_xyz else 0)


def positional_encode(x: np.ndarray, levels: int, include_raw: bool = False) -> np.ndarray:
    """NeRF-style positional encoding of 3D coordinates.

    Concatenates [sin(2^l pi x), cos(2^l pi x)] for l = 0..levels-1 over the
    last axis, giving 6*levels features (plus the raw 3 if requested).
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    freqs = (2.0 ** np.arange(levels)) * np.pi
    ang = x[..., None, :] * freqs[:, None]            # (..., levels, 3)
    enc = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)  # (..., levels, 6)
    enc = enc.reshape(*x.shape[:-1], 6 * levels)
    if include_raw:
        enc = np.concatenate([x, enc], axis=-1)
    return enc


def graph_conv(features: Tensor, w1: Tensor, w2: Tensor, b: Tensor,
               beta: int) -> Tensor:
    """Star-graph depthwise-separable convolution pooling leaves into one feature.

    Computes sum_k sum_i W_i2((W_i1 h_k) * h_k) + b with the per-branch
    matrices stacked columnwise: w1 is (C_in, beta*C_in) and w2 is
    (beta*C_in, C_out). `features` has shape (..., K, C_in); the K axis is
    summed away.
    """
    c_in = features.shape[-1]
    if w1.shape != (c_in, beta * c_in):
        raise ValueError(f"w1 must be ({c_in}, {beta * c_in}), got {w1.shape}")
    lead = features.shape[:-1]
    z = features @ w1                                    # (..., K, beta*C_in)
    zb = z.reshape(*lead, beta, c_in)
    m = zb * features.reshape(*lead, 1, c_in)            # branchwise (W_i1 h) * h
    y = m.reshape(*lead, beta * c_in) @ w2               # (..., K, C_out)
    return y.sum(axis=-2) + b


class Detector:
    """Detector parameters bound to an anchor grid and patch normalization."""

    def __init__(self, config: DetectorConfig, grid: AnchorGrid, eta0: float,
                 k: int, seed: int = 0):
        self.config = config
        self.grid = grid
        self.eta0 = float(eta0)
        self.k = int(k)
        self.params = _init_params(config, grid.t, self.k, np.random.default_rng(seed))

    # -- parameter plumbing ---------------------------------------------------

    def parameter_items(self):
        """(name, tensor) pairs in canonical (sorted-name) order."""
        return sorted(self.params.items())

    def zero_grad(self):
        for _, p in self.parameter_items():
            p.grad = None

    def check_finite(self):
        for name, p in self.parameter_items():
            if not np.all(np.isfinite(p.data)):
                raise NonFiniteLoss(f"parameter {name} became non-finite")

    # -- forward ---------------------------------------------------------------

    def forward(self, neighbors: np.ndarray) -> Tensor:
        """Run the network on a batch of normalized patches.

        Args:
            neighbors: (B, K, 3) normalized neighbor coordinates.

        Returns:
            Tensor of shape (B, t, s, 4): [..., 0] is the confidence logit,
            [..., 1:4] the (rho, theta, phi) offsets.
        """
        cfg = self.config
        neighbors = np.asarray(neighbors, dtype=np.float64)
        if neighbors.ndim != 3 or neighbors.shape[2] != 3:
            raise ValueError(f"neighbors must be (B, K, 3), got {neighbors.shape}")
        h = Tensor(positional_encode(neighbors, cfg.pe_levels, cfg.include_raw_xyz))
        for li in range(len(cfg.point_mlp)):
            h = (h @ self.params[f"point_mlp.{li}.w"] + self.params[f"point_mlp.{li}.b"]).relu()
        h = graph_conv(h, self.params["conv.w1"], self.params["conv.w2"],
                       self.params["conv.b"], cfg.depth_multiplier).relu()
        for li in range(len(cfg.head_mlp)):
            h = (h @ self.params[f"head.{li}.w"] + self.params[f"head.{li}.b"]).relu()
        out = h @ self.params["head.out.w"] + self.params["head.out.b"]
        return out.reshape(neighbors.shape[0], self.grid.t, cfg.slots_per_cell, 4)


def _init_params(cfg: DetectorConfig, t: int, k: int,
                 rng: np.random.Generator) -> dict:
    """Uniform fan-in-scaled initialization, seeded; insertion order is fixed."""
    params = {}

    def linear(name, fan_in, fan_out, eff_fan_in=None):
        bound = 1.0 / np.sqrt(eff_fan_in if eff_fan_in is not None else fan_in)
        params[f"{name}.w"] = parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))
        params[f"{name}.b"] = parameter(rng.uniform(-bound, bound, fan_out))

    width = cfg.feature_dim
    for li, w in enumerate(cfg.point_mlp):
        linear(f"point_mlp.{li}", width, w)
        width = w
    c_in, c_out, beta = width, cfg.conv_out, cfg.depth_multiplier
    bound1 = 1.0 / np.sqrt(c_in)
    params["conv.w1"] = parameter(rng.uniform(-bound1, bound1, (c_in, beta * c_in)))
    # Each conv output unit sums beta*C_in*K products, so scale like that
    # effective fan-in to keep patch features O(1) at init.
    bound2 = 1.0 / np.sqrt(beta * c_in * max(k, 1))
    params["conv.w2"] = parameter(rng.uniform(-bound2, bound2, (beta * c_in, c_out)))
    params["conv.b"] = parameter(rng.uniform(-bound2, bound2, c_out))
    width = c_out
    for li, w in enumerate(cfg.head_mlp):
        linear(f"head.{li}", width, w)
        width = w
    linear("head.out", width, t * cfg.slots_per_cell * 4)
    return params


# -- losses ---------------------------------------------------------------------

def bce_loss(logits: Tensor, positive_mask: np.ndarray, neg_ratio: float,
             logit_clip: float = 30.0):
    """Occupancy classification loss with hard negative mining.

    Positives are averaged as-is; negatives are restricted to the
    `neg_ratio * N_p` entries with the highest predicted probability.

    Args:
        logits: Tensor of any shape.
        positive_mask: boolean ndarray, same shape.

    Returns:
        (loss Tensor, stats dict with n_pos / n_neg).

    Raises:
        NoPositives: when the mask has no true entries (resample the batch).
    """
    mask = np.asarray(positive_mask, dtype=bool).reshape(-1)
    n_pos = int(mask.sum())
    if n_pos == 0:
        raise NoPositives("batch has no positive anchor cells")
    flat = logits.reshape(logits.data.size).clip(-logit_clip, logit_clip)
    pos_idx = np.nonzero(mask)[0]
    neg_idx = np.nonzero(~mask)[0]
    n_neg = min(len(neg_idx), int(round(neg_ratio * n_pos)))
    if n_neg == 0:
        raise NoPositives("no negatives available for mining")
    # hardest negatives = highest probability of being (wrongly) positive
    neg_logits = flat.data[neg_idx]
    hardest = neg_idx[np.argsort(-neg_logits, kind="stable")[:n_neg]]
    loss_pos = (-flat.take(pos_idx)).softplus().mean()
    loss_neg = flat.take(hardest).softplus().mean()
    loss = loss_pos + loss_neg
    return loss, {"n_pos": n_pos, "n_neg": n_neg,
                  "hard_negatives": tuple(sorted(hardest.tolist()))}


def _assignments(tau: int, s: int):
    """All ways of assigning the s predicted slots to tau ground truths.

    P(tau, s) = ordered selections without repetition; the single ground
    truth of a tau=1 cell is assigned to every slot.
    """
    if tau >= s:
        return list(permutations(range(tau), s))
    if tau == 1:
        return [(0,) * s]
    raise NotImplementedError(f"tau={tau} < s={s} with tau > 1")


def loc_loss(pred_offsets: Tensor, positives):
    """Localization loss over positive cells.

    Args:
        pred_offsets: Tensor (B, t, s, 3) of predicted offsets.
        positives: list of (batch index, flat cell index, (tau, 3) GT offsets).

    Returns:
        (loss Tensor averaged over the positive cells, best-assignment list).

    The assignment minimizing the summed smooth-L1 of the matched pairs is
    selected per cell from the current predictions, then the loss is computed
    along that selection (the minimum is piecewise smooth, so its gradient is
    the active branch's).
    """
    b_dim, t_dim, s_dim, _ = pred_offsets.shape
    if not positives:
        return Tensor(0.0), []
    flat_base, targets, chosen = [], [], []
    pred_data = pred_offsets.data
    for b, cell, gts in positives:
        gts = np.asarray(gts, dtype=np.float64).reshape(-1, 3)
        slots = pred_data[b, cell]                       # (s, 3)
        options = _assignments(len(gts), s_dim)
        costs = [_smooth_l1_np(gts[list(a)] - slots).sum() for a in options]
        best = options[int(np.argmin(costs))]
        chosen.append(best)
        targets.append(gts[list(best)])                  # (s, 3)
        start = ((b * t_dim) + cell) * s_dim * 3
        flat_base.append(np.arange(start, start + s_dim * 3))
    idx = np.concatenate(flat_base)
    target = np.concatenate(targets).reshape(-1)
    per_elem = (pred_offsets.reshape(pred_offsets.data.size).take(idx) - target).smooth_l1()
    loss = per_elem.sum() / len(positives)
    return loss, chosen


def _smooth_l1_np(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def positives_from_samples(samples, batch_indices, slots_per_cell: int, t: int):
    """Assemble loss inputs for a batch of training samples.

    Returns (neighbors (B, K, 3), positive slot mask (B, t, s), positives
    list for loc_loss). Every slot of an occupied cell is a positive
    classification element.
    """
    neighbors = np.stack([_neighbors_of(samples[i]) for i in batch_indices])
    mask = np.zeros((len(batch_indices), t, slots_per_cell), dtype=bool)
    positives = []
    for row, i in enumerate(batch_indices):
        for cell, offs in sorted(samples[i].positive_cells.items()):
            mask[row, cell, :] = True
            positives.append((row, cell, offs))
    return neighbors, mask, positives


def _neighbors_of(sample):
    if hasattr(sample, "patch"):
        return sample.patch.normalized_neighbors
    return sample.normalized_neighbors


def detector_loss(model: Detector, neighbors, mask, positives):
    """Combined loss L = L1 + lambda * L2 for one batch; returns (loss, report)."""
    out = model.forward(neighbors)
    logits = out.take(_slice_indices(out.shape, 0))
    offsets = out.take(_slice_indices(out.shape, slice(1, 4)))
    offsets = offsets.reshape(out.shape[0], out.shape[1], out.shape[2], 3)
    l1, stats = bce_loss(logits, mask, model.config.neg_ratio, model.config.logit_clip)
    l2, chosen = loc_loss(offsets, positives)
    loss = l1 + l2 * model.config.lambda_loc
    report = {"loss": float(loss.data), "bce": float(l1.data),
              "loc": float(l2.data), "n_pos": stats["n_pos"],
              "n_neg": stats["n_neg"],
              "selection": (stats["hard_negatives"], tuple(chosen))}
    if not np.isfinite(report["loss"]):
        raise NonFiniteLoss(f"loss became non-finite: {report}")
    return loss, report


def _slice_indices(shape, last):
    """Flat indices selecting [..., last] of a tensor with trailing dim 4."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    return idx[..., last].reshape(-1)


# -- optimizer ------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments plus the step-decay learning-rate schedule."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_every: int = 80000
    decay_factor: float = 0.5
    step: int = 0
    moments: dict = field(default_factory=dict)

    def current_lr(self) -> float:
        return self.lr * self.decay_factor ** (self.step // self.decay_every)


def adam_update(model: Detector, state: AdamState):
    """Apply one Adam step to every parameter from its accumulated gradient."""
    state.step += 1
    lr = state.current_lr()
    for name, p in model.parameter_items():
        g = p.grad
        if g is None:
            continue
        m, v = state.moments.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.moments[name] = (m, v)
        m_hat = m / (1 - state.beta1 ** state.step)
        v_hat = v / (1 - state.beta2 ** state.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    model.check_finite()


def train_step(model: Detector, batch, state: AdamState):
    """One optimization step on a prepared batch.

    `batch` is the (neighbors, mask, positives) triple from
    `positives_from_samples`. Deterministic given the model seed and batch.
    """
    neighbors, mask, positives = batch
    model.zero_grad()
    loss, report = detector_loss(model, neighbors, mask, positives)
    loss.backward()
    adam_update(model, state)
    report["lr"] = state.current_lr()
    report["step"] = state.step
    return report


def run_training(model: Detector, samples, n_iters: int, batch_size: int,
                 seed: int = 0, state: AdamState | None = None,
                 log_every: int = 0, on_log=None):
    """Train on uniformly resampled minibatches; deterministic given seed.

    Batches that happen to contain no positive cells are redrawn (counted as
    the same iteration). Returns the list of per-iteration reports.
    """
    if state is None:
        state = AdamState()
    rng = np.random.default_rng(seed)
    t = model.grid.t
    s = model.config.slots_per_cell
    history = []
    for it in range(n_iters):
        for _ in range(100):
            idx = rng.choice(len(samples), size=min(batch_size, len(samples)),
                             replace=len(samples) < batch_size)
            batch = positives_from_samples(samples, idx, s, t)
            try:
                report = train_step(model, batch, state)
                break
            except NoPositives:
                continue
        else:
            raise NoPositives("could not draw a batch with positive cells")
        history.append(report)
        if log_every and on_log and (it % log_every == 0 or it == n_iters - 1):
            on_log(report)
    return history


# -- checkpoint I/O -----------------------------------------------------------
#
# Binary layout (little-endian):
#   magic "CIRC" | u32 version |
#   u32 pe_levels | u8 include_raw | u32 beta | u32 n_point + u32s |
#   u32 conv_out | u32 n_head + u32s | u32 s |
#   f64 lambda | f64 neg_ratio | f64 logit_clip |
#   f64 delta_rho | f64 delta_theta | f64 delta_phi | f64 R | f64 eta0 | u32 k |
#   u32 n_tensors, then per tensor (sorted by name):
#     u32 name_len | name utf8 | u32 ndim | u32 dims... | f32 data

def save_checkpoint(path, model: Detector):
    buf = io.BytesIO()
    cfg = model.config
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<IBI", cfg.pe_levels, int(cfg.include_raw_xyz),
                          cfg.depth_multiplier))
    buf.write(struct.pack("<I", len(cfg.point_mlp)))
    buf.write(struct.pack(f"<{len(cfg.point_mlp)}I", *cfg.point_mlp))
    buf.write(struct.pack("<I", cfg.conv_out))
    buf.write(struct.pack("<I", len(cfg.head_mlp)))
    buf.write(struct.pack(f"<{len(cfg.head_mlp)}I", *cfg.head_mlp))
    buf.write(struct.pack("<I", cfg.slots_per_cell))
    buf.write(struct.pack("<3d", cfg.lambda_loc, cfg.neg_ratio, cfg.logit_clip))
    buf.write(struct.pack("<5d", model.grid.delta_rho, model.grid.delta_theta,
                          model.grid.delta_phi, model.grid.r_max, model.eta0))
    buf.write(struct.pack("<I", model.k))
    items = model.parameter_items()
    buf.write(struct.pack("<I", len(items)))
    for name, p in items:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", p.data.ndim))
        buf.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        buf.write(p.data.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> Detector:
    """Reconstruct a Detector; rejects malformed files and shape mismatches."""
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)

    def unpack(fmt):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise CheckpointError(f"{path}: truncated checkpoint")
        return struct.unpack(fmt, chunk)

    if buf.read(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a detector checkpoint")
    (version,) = unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pe_levels, include_raw, beta = unpack("<IBI")
    (n_point,) = unpack("<I")
    point_mlp = unpack(f"<{n_point}I")
    (conv_out,) = unpack("<I")
    (n_head,) = unpack("<I")
    head_mlp = unpack(f"<{n_head}I")
    (s,) = unpack("<I")
    lam, neg_ratio, logit_clip = unpack("<3d")
    d_rho, d_theta, d_phi, r_max, eta0 = unpack("<5d")
    (k,) = unpack("<I")
    cfg = DetectorConfig(pe_levels=pe_levels, include_raw_xyz=bool(include_raw),
                         depth_multiplier=beta, point_mlp=tuple(point_mlp),
                         conv_out=conv_out, head_mlp=tuple(head_mlp),
                         slots_per_cell=s, lambda_loc=lam, neg_ratio=neg_ratio,
                         logit_clip=logit_clip)
    grid = build_grid(d_rho, d_theta, d_phi, r_max)
    model = Detector(cfg, grid, eta0, k, seed=0)
    (n_tensors,) = unpack("<I")
    expected = dict(model.parameter_items())
    if n_tensors != len(expected):
        raise CheckpointError(
            f"{path}: {n_tensors} tensors, config implies {len(expected)}")
    for _ in range(n_tensors):
        (name_len,) = unpack("<I")
        name = buf.read(name_len).decode("utf-8")
        (ndim,) = unpack("<I")
        shape = unpack(f"<{ndim}I")
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected tensor {name!r}")
        if tuple(expected[name].data.shape) != shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {shape}, "
                f"config implies {expected[name].data.shape}")
        count = int(np.prod(shape)) if shape else 1
        raw = buf.read(4 * count)
        if len(raw) != 4 * count:
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        expected[name].data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    return model
