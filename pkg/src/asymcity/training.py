"""Joint objective, gradients and the optimisation loop."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderConfig, backward, forward_batch, init_params
from .errors import DomainError, NumericError, ParameterError
from .trajectories import Dataset, sub_seed

COMPONENTS = ("recon", "contrast", "shared", "ortho")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 16
    learning_rate: float = 0.002
    margin: float = 1.0
    lambda_recon: float = 1.0
    lambda_contrast: float = 0.5
    lambda_shared: float = 0.1
    lambda_ortho: float = 0.01
    clip_norm: float = 1.0
    early_stop_patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    contrastive_form: str = "standard"  # or "literal"
    seed: int = 0

    def validate(self):
        for name in ("epochs", "batch_size", "learning_rate", "margin", "clip_norm",
                     "early_stop_patience", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ParameterError(name, "must be > 0")
        for name in ("lambda_recon", "lambda_contrast", "lambda_shared", "lambda_ortho"):
            if getattr(self, name) < 0:
                raise ParameterError(name, "must be >= 0")
        if self.early_stop_patience >= self.epochs and self.epochs > 1:
            raise ParameterError("early_stop_patience", "must be < epochs")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("beta1", "decay rates must lie in [0, 1)")
        if self.contrastive_form not in ("standard", "literal"):
            raise ParameterError("contrastive_form", "expected 'standard' or 'literal'")

    def weights(self) -> dict[str, float]:
        return {"recon": self.lambda_recon, "contrast": self.lambda_contrast,
                "shared": self.lambda_shared, "ortho": self.lambda_ortho}


# --- loss terms; each returns (value, gradient w.r.t. its first argument) ---

def recon_term(recon, target):
    recon = np.asarray(recon, dtype=float)
    target = np.asarray(target, dtype=float)
    if recon.shape != target.shape:
        raise DomainError(f"shape mismatch {recon.shape} vs {target.shape}")
    diff = recon - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def contrastive_term(Z, origins, margin=1.0, form="standard"):
    Z = np.asarray(Z, dtype=float)
    origins = np.asarray(origins)
    n = len(Z)
    if n < 2:
        raise DomainError("contrastive loss needs a batch of at least 2")
    iu, ju = np.triu_indices(n, k=1)
    diff = Z[iu] - Z[ju]
    d = np.sqrt(np.sum(diff * diff, axis=1))
    same = origins[iu] == origins[ju]
    n_pairs = len(iu)
    safe = np.where(d > 0, d, 1.0)
    if form == "standard":
        hinge = np.maximum(margin - d, 0.0)
        per_pair = np.where(same, d * d, hinge * hinge)
        # d/d(diff) of d^2 is 2 diff; of (m - d)^2 is -2 (m - d) diff / d
        coef = np.where(same, 2.0, np.where(d > 0, -2.0 * hinge / safe, 0.0))
    elif form == "literal":
        act = d - margin + same.astype(float)
        per_pair = np.maximum(act, 0.0)
        coef = np.where((act > 0) & (d > 0), 1.0 / safe, 0.0)
    else:
        raise ParameterError("contrastive_form", f"unknown form {form!r}")
    gd = coef[:, None] * diff / n_pairs
    grad = np.zeros_like(Z)
    np.add.at(grad, iu, gd)
    np.add.at(grad, ju, -gd)
    return float(per_pair.mean()), grad


def shared_term(Z):
    Z = np.asarray(Z, dtype=float)
    if len(Z) < 1:
        raise DomainError("shared loss needs a non-empty batch")
    dev = Z - Z.mean(axis=0)
    return float(np.mean(np.sum(dev * dev, axis=1))), 2.0 * dev / len(Z)


def ortho_term(Z, origins):
    Z = np.asarray(Z, dtype=float)
    origins = np.asarray(origins)
    present = np.unique(origins)
    grad = np.zeros_like(Z)
    if len(present) < 2:
        return 0.0, grad
    masks = [origins == p for p in present]
    mus = np.stack([Z[m].mean(axis=0) for m in masks])
    G = mus @ mus.T
    iu, ju = np.triu_indices(len(present), k=1)
    value = float(np.sum(G[iu, ju] ** 2))
    Gz = G.copy()
    np.fill_diagonal(Gz, 0.0)
    dmu = 2.0 * Gz @ mus
    for m, g in zip(masks, dmu):
        grad[m] = g / m.sum()
    return value, grad


def loss_recon(recon, target) -> float:
    return recon_term(recon, target)[0]


def loss_contrastive(Z, origins, m=1.0, form="standard") -> float:
    return contrastive_term(Z, origins, m, form)[0]


def loss_shared(Z) -> float:
    return shared_term(Z)[0]


def loss_ortho(Z, origins) -> float:
    return ortho_term(Z, origins)[0]


def _objective(out, targets, origins, cfg: TrainConfig, shared_dim: int):
    w = cfg.weights()
    z = out.latent.z
    zs, zp = z[:, :shared_dim], z[:, shared_dim:]
    comps = {}
    r, g_recon = recon_term(out.recon, targets)
    comps["recon"] = r
    dz = np.zeros_like(z)
    if len(z) >= 2:
        comps["contrast"], g = contrastive_term(zp, origins, cfg.margin, cfg.contrastive_form)
        dz[:, shared_dim:] += w["contrast"] * g
    else:
        comps["contrast"] = 0.0
    comps["shared"], g = shared_term(zs)
    dz[:, :shared_dim] += w["shared"] * g
    comps["ortho"], g = ortho_term(zp, origins)
    dz[:, shared_dim:] += w["ortho"] * g
    total = sum(w[c] * comps[c] for c in COMPONENTS)
    return total, comps, dz, w["recon"] * g_recon


def total_loss(out, targets, origins, cfg: TrainConfig, shared_dim: int = 32):
    """Weighted four-term objective for a batch forward output; returns (total, components)."""
    total, comps, _, _ = _objective(out, targets, origins, cfg, shared_dim)
    return total, comps


def evaluate(params, X, k, cfg: TrainConfig, shared_dim: int):
    out = forward_batch(params, X, k, shared_dim, keep_cache=False)
    return total_loss(out, X, k, cfg, shared_dim)


def gradients(params, X, k, cfg: TrainConfig, shared_dim: int = 32):
    """Exact gradient of the total loss on batch (X, k); returns (grads, total, components)."""
    out = forward_batch(params, X, k, shared_dim)
    total, comps, dz, drecon = _objective(out, X, k, cfg, shared_dim)
    return backward(params, out, dz, drecon), total, comps


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads, clip_norm):
    """Rescale to global norm ``clip_norm`` if larger; returns (grads, pre-clip norm)."""
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        grads = {n: g * scale for n, g in grads.items()}
    return grads, norm


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(p) for n, p in params.items()}
        self.v = {n: np.zeros_like(p) for n, p in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for n, g in grads.items():
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * g * g
            params[n] -= self.lr * (self.m[n] / bc1) / (np.sqrt(self.v[n] / bc2) + self.eps)


def make_batches(k, batch_size: int, rng) -> list[np.ndarray]:
    """Shuffle indices into batches, then swap members so every batch spans >= 2 origins when possible."""
    k = np.asarray(k)
    perm = rng.permutation(len(k))
    batches = [perm[i:i + batch_size].copy() for i in range(0, len(perm), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    for b in batches:
        if len(b) < 2 or len(np.unique(k[b])) > 1:
            continue
        own = k[b[0]]
        swap = _find_swap(batches, b, k, own)
        if swap is not None:
            other, j = swap
            b[0], other[j] = other[j], b[0]
    return batches


def _find_swap(batches, b, k, own):
    for other in batches:
        if other is b:
            continue
        for j in range(len(other)):
            if k[other[j]] == own:
                continue
            after = np.append(np.delete(k[other], j), own)
            if len(np.unique(after)) > 1:
                return other, j
    return None


@dataclass
class TrainingLog:
    epochs: list[dict] = field(default_factory=list)
    initial_total: float = float("nan")
    best_epoch: int = 0
    stopping_epoch: int = 0
    normalized_recon_error: float = float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["epoch", "total", *COMPONENTS, "val_total", "grad_norm"]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.epochs:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])
        return buf.getvalue()


def train(dataset: Dataset, enc_cfg: EncoderConfig, cfg: TrainConfig = TrainConfig(),
          init: dict | None = None):
    """Train the encoder; returns (best-validation params, TrainingLog)."""
    cfg.validate()
    enc_cfg.validate()
    Xtr, ktr = dataset.arrays("train")
    Xva, kva = dataset.arrays("val")
    if len(Xtr) == 0 or len(Xva) == 0:
        raise DomainError("dataset needs both train and validation trajectories")
    ds = enc_cfg.shared_dim
    params = init_params(enc_cfg, sub_seed(cfg.seed, "init")) if init is None else \
        {n: p.copy() for n, p in init.items()}
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    log = TrainingLog()
    log.initial_total = evaluate(params, Xtr, ktr, cfg, ds)[0]

    best_val = math.inf
    best_params = {n: p.copy() for n, p in params.items()}
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng(sub_seed(cfg.seed, f"epoch/{epoch}"))
        sums = dict.fromkeys(("total", *COMPONENTS), 0.0)
        norms = []
        batches = make_batches(ktr, cfg.batch_size, rng)
        for step, b in enumerate(batches):
            grads, total, comps = gradients(params, Xtr[b], ktr[b], cfg, ds)
            if not math.isfinite(total):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {step}")
            grads, norm = clip_gradients(grads, cfg.clip_norm)
            norms.append(norm)
            opt.step(params, grads)
            sums["total"] += total
            for c in COMPONENTS:
                sums[c] += comps[c]
        val_total = evaluate(params, Xva, kva, cfg, ds)[0]
        if not math.isfinite(val_total):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        row = {"epoch": epoch, **{c: v / len(batches) for c, v in sums.items()},
               "val_total": val_total, "grad_norm": float(np.mean(norms))}
        log.epochs.append(row)
        log.stopping_epoch = epoch
        if val_total < best_val:
            best_val = val_total
            best_params = {n: p.copy() for n, p in params.items()}
            log.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
    log.normalized_recon_error = normalized_recon_error(best_params, dataset, ds)
    return best_params, log


def normalized_recon_error(params, dataset: Dataset, shared_dim: int = 32) -> float:
    """Validation reconstruction MSE divided by the population variance of all feature values."""
    X_all, _ = dataset.arrays()
    var = float(np.var(X_all))
    if var == 0:
        raise DomainError("feature values have zero variance")
    Xva, kva = dataset.arrays("val")
    out = forward_batch(params, Xva, kva, shared_dim, keep_cache=False)
    return loss_recon(out.recon, Xva) / var
