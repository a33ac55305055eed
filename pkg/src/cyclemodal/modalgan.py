"""Cycle-consistent adversarial training between natural and modal coordinates.

Two generators map preprocessed displacements ``y`` to modal coordinates
``u`` and back; two discriminators judge the modal side against samples of
N(0, I) and the natural side against the data.  A finite-difference probe of
the modal-to-natural generator penalises the angle between the images of
distinct latent axes, pushing that map towards conformality.

Notation used throughout: ``G_yu`` natural -> modal, ``G_uy`` modal ->
natural, ``D_u`` judges modal samples, ``D_y`` judges natural samples.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import NumericalError
from .metrics import nmse
from .series import TimeSeriesMatrix
from .signal import CovariancePCA, SymmetricScaler, welch_psd
from .neural import AdamState, MlpParams, adam_step, mlp_backward, mlp_forward, mlp_init

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))


@dataclass
class TrainConfig:
    lambda_cycle: float = 10.0
    ortho_weight: float = 1.0
    ortho_eps: float = 0.05
    cycle_norm_order: int = 2
    batch_size: int = 128
    epochs: int = 2000
    checkpoint_every: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.lambda_cycle > 0:
            raise ValueError("lambda_cycle must be positive")
        if not self.ortho_eps > 0:
            raise ValueError("ortho_eps must be positive")
        if self.ortho_weight < 0:
            raise ValueError("ortho_weight must be non-negative")
        if self.cycle_norm_order != 2:
            raise ValueError("only the squared 2-norm reconstruction loss is implemented")
        if self.batch_size < 1 or self.epochs < 0 or self.checkpoint_every < 1:
            raise ValueError("batch_size and checkpoint_every must be >= 1, epochs >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    def adam_hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.adam_eps}


@dataclass
class LossRecord:
    """Epoch means of every loss term; ``total`` is the generators' objective
    (both adversarial terms, weighted cycle term, weighted orthogonality)."""

    epoch: int
    d_y: float
    d_u: float
    g_adv_yu: float
    g_adv_uy: float
    recon: float
    ortho: float
    total: float

    def as_row(self) -> dict:
        return asdict(self)

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in self.as_row().values())


class CycleGanNets:
    """The four networks of one training run and their optimiser states."""

    def __init__(self, n_dof, hidden, seed=None, adam=None, hidden_activation="tanh"):
        if n_dof < 1 or hidden < 1:
            raise ValueError("n_dof and hidden must be >= 1")
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s = ss.spawn(4)
        mk = lambda out, act, sd: mlp_init(n_dof, hidden, out, act, np.random.default_rng(sd),
                                           hidden_activation)
        self.n_dof = int(n_dof)
        self.hidden = int(hidden)
        self.G_yu = mk(n_dof, "linear", s[0])
        self.G_uy = mk(n_dof, "linear", s[1])
        self.D_u = mk(1, "sigmoid", s[2])
        self.D_y = mk(1, "sigmoid", s[3])
        adam = adam or {}
        self.opt = {name: AdamState.for_params(getattr(self, name), **adam) for name in self.NAMES}

    NAMES = ("G_yu", "G_uy", "D_u", "D_y")

    def step(self, name, grads):
        adam_step(self.opt[name], getattr(self, name), grads)

    def snapshot(self) -> dict:
        return {name: getattr(self, name).copy() for name in self.NAMES}

    def load(self, snap: dict):
        for name in self.NAMES:
            getattr(self, name).set_theta(snap[name].theta)


def sample_latent(batch, dim, rng=None):
    """Draws from the predefined modal distribution N(0, I_dim)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.standard_normal((int(batch), int(dim)))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def discriminator_loss(D: MlpParams, real, fake):
    """BCE with targets 1 for ``real`` and 0 for ``fake``; returns (loss, grad_D)."""
    real = np.asarray(real, dtype=float)
    fake = np.asarray(fake, dtype=float)
    if real.shape[1] != fake.shape[1]:
        raise ValueError("real and fake batches must have the same width")
    nr, nf = real.shape[0], fake.shape[0]
    _, cache = mlp_forward(D, np.vstack([real, fake]))
    z = cache.z
    zr, zf = z[:nr], z[nr:]
    loss = _softplus(-zr).mean() + _softplus(zf).mean()
    if not np.isfinite(loss):
        raise NumericalError("non-finite discriminator loss")
    dz = np.empty_like(z)
    dz[:nr] = (_sig(zr) - 1.0) / nr
    dz[nr:] = _sig(zf) / nf
    grad, _ = mlp_backward(D, cache, dz, wrt_logits=True)
    return float(loss), grad


def generator_adversarial_loss(D: MlpParams, fake):
    """BCE of D(fake) against target 1 with D held fixed.

    Returns ``(loss, grad_fake)`` where ``grad_fake`` is the gradient with
    respect to the generated batch, ready to be pushed into the generator.
    """
    fake = np.asarray(fake, dtype=float)
    _, cache = mlp_forward(D, fake)
    z = cache.z
    loss = _softplus(-z).mean()
    if not np.isfinite(loss):
        raise NumericalError("non-finite generator adversarial loss")
    _, grad_in = mlp_backward(D, cache, (_sig(z) - 1.0) / z.shape[0], wrt_logits=True)
    return float(loss), grad_in


def adversarial_losses(D: MlpParams, real, fake):
    """Both sides of the adversarial game for one discriminator.

    Returns ``(d_loss, g_loss, grads)`` with ``grads["D"]`` the gradient of
    ``d_loss`` w.r.t. the discriminator parameters and ``grads["fake"]`` the
    gradient of ``g_loss`` w.r.t. the fake batch.
    """
    d_loss, gD = discriminator_loss(D, real, fake)
    g_loss, gfake = generator_adversarial_loss(D, fake)
    return d_loss, g_loss, {"D": gD, "fake": gfake}


def reconstruction_loss(G_a: MlpParams, G_b: MlpParams, batch):
    """Mean squared 2-norm of ``G_b(G_a(x)) - x``; returns (loss, grad_a, grad_b)."""
    x = np.asarray(batch, dtype=float)
    mid, ca = mlp_forward(G_a, x)
    rec, cb = mlp_forward(G_b, mid)
    diff = rec - x
    loss = float(np.einsum("ij,ij->", diff, diff) / x.shape[0])
    if not np.isfinite(loss):
        raise NumericalError("non-finite reconstruction loss")
    grad_b, dmid = mlp_backward(G_b, cb, 2.0 * diff / x.shape[0])
    grad_a, _ = mlp_backward(G_a, ca, dmid)
    return loss, grad_a, grad_b


def random_axis_pairs(batch, dim, rng):
    """One random pair of distinct latent axes per batch element."""
    if dim < 2:
        raise ValueError("orthogonality needs at least two latent axes")
    if dim == 2:
        return np.tile([0, 1], (batch, 1))
    a = rng.integers(0, dim, size=batch)
    b = (a + rng.integers(1, dim, size=batch)) % dim
    return np.stack([a, b], axis=1)


def orthogonality_loss(G_uy: MlpParams, latent, eps=0.05, pairs=None, rng=None):
    """Mean squared cosine between central-difference images of two latent axes.

    For each latent point ``u`` and axis pair ``(a, b)``::

        v_a = G(u + eps e_a) - G(u - eps e_a)
        v_b = G(u + eps e_b) - G(u - eps e_b)
        loss = mean cos^2(v_a, v_b)

    ``pairs`` is an ``(B, 2)`` integer array; by default one random distinct
    pair per element is drawn from ``rng`` (always ``(0, 1)`` in 2-D).
    Samples whose difference vectors are numerically zero are skipped.
    Returns ``(loss, grad)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    u = np.asarray(latent, dtype=float)
    B, n = u.shape
    if pairs is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        pairs = random_axis_pairs(B, n, rng)
    pairs = np.asarray(pairs)
    if pairs.shape != (B, 2) or np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("pairs must be a (B, 2) array of distinct axes")
    rows = np.arange(B)
    ea = np.zeros_like(u)
    eb = np.zeros_like(u)
    ea[rows, pairs[:, 0]] = eps
    eb[rows, pairs[:, 1]] = eps
    out, cache = mlp_forward(G_uy, np.vstack([u + ea, u - ea, u + eb, u - eb]))
    va = out[:B] - out[B:2 * B]
    vb = out[2 * B:3 * B] - out[3 * B:]
    na = np.sqrt(np.einsum("ij,ij->i", va, va))
    nb = np.sqrt(np.einsum("ij,ij->i", vb, vb))
    ok = (na >= 1e-12) & (nb >= 1e-12)
    n_ok = int(ok.sum())
    if n_ok < B:
        warnings.warn(f"degenerate Jacobian: skipped {B - n_ok} of {B} orthogonality samples",
                      RuntimeWarning, stacklevel=2)
    if n_ok == 0:
        return 0.0, np.zeros_like(G_uy.theta)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    cos = np.einsum("ij,ij->i", va, vb) / (na_s * nb_s)
    cos = np.where(ok, cos, 0.0)
    loss = float(np.sum(cos * cos) / n_ok)
    coef = (2.0 * cos / n_ok)[:, None]
    ga = coef * (vb / (na_s * nb_s)[:, None] - cos[:, None] * va / (na_s * na_s)[:, None])
    gb = coef * (va / (na_s * nb_s)[:, None] - cos[:, None] * vb / (nb_s * nb_s)[:, None])
    grad, _ = mlp_backward(G_uy, cache, np.vstack([ga, -ga, gb, -gb]))
    return loss, grad


def train_epoch(nets: CycleGanNets, y_scaled, cfg: TrainConfig, rng, epoch=0) -> LossRecord:
    """One pass over ``y_scaled`` (already PCA-rotated and scaled).

    For each minibatch, stage A runs natural -> modal -> natural and stage B
    runs modal -> natural -> modal, each as: discriminator update, generator
    adversarial update, cycle update of both generators.  Stage B finishes
    with an orthogonality update of ``G_uy`` on fresh latent points.
    """
    y_scaled = np.asarray(y_scaled, dtype=float)
    N, n = y_scaled.shape
    if n != nets.n_dof:
        raise ValueError(f"data has {n} channels but the model has {nets.n_dof}")
    order = rng.permutation(N)
    lam = cfg.lambda_cycle
    sums = np.zeros(6)
    n_batches = 0
    for start in range(0, N, cfg.batch_size):
        y = y_scaled[order[start:start + cfg.batch_size]]
        B = y.shape[0]

        # stage A: y -> u -> y
        z = sample_latent(B, n, rng)
        u_fake, c_yu = mlp_forward(nets.G_yu, y)
        d_u, g = discriminator_loss(nets.D_u, z, u_fake)
        nets.step("D_u", g)
        g_yu, gfake = generator_adversarial_loss(nets.D_u, u_fake)
        g, _ = mlp_backward(nets.G_yu, c_yu, gfake)
        nets.step("G_yu", g)
        rec_a, ga, gb = reconstruction_loss(nets.G_yu, nets.G_uy, y)
        nets.step("G_yu", lam * ga)
        nets.step("G_uy", lam * gb)

        # stage B: u -> y -> u
        u = sample_latent(B, n, rng)
        y_fake, c_uy = mlp_forward(nets.G_uy, u)
        d_y, g = discriminator_loss(nets.D_y, y, y_fake)
        nets.step("D_y", g)
        g_uy, gfake = generator_adversarial_loss(nets.D_y, y_fake)
        g, _ = mlp_backward(nets.G_uy, c_uy, gfake)
        nets.step("G_uy", g)
        rec_b, gb, ga = reconstruction_loss(nets.G_uy, nets.G_yu, u)
        nets.step("G_uy", lam * gb)
        nets.step("G_yu", lam * ga)
        if cfg.ortho_weight > 0 and n >= 2:
            u_o = sample_latent(B, n, rng)
            orth, g = orthogonality_loss(nets.G_uy, u_o, cfg.ortho_eps, rng=rng)
            nets.step("G_uy", cfg.ortho_weight * g)
        else:
            orth = 0.0

        sums += (d_y, d_u, g_yu, g_uy, rec_a + rec_b, orth)
        n_batches += 1

    d_y, d_u, g_yu, g_uy, recon, orth = (float(v) for v in sums / max(n_batches, 1))
    total = g_yu + g_uy + lam * recon + cfg.ortho_weight * orth
    rec = LossRecord(epoch, d_y, d_u, g_yu, g_uy, recon, orth, total)
    if not rec.is_finite():
        raise NumericalError(f"non-finite loss in epoch {epoch}: {rec.as_row()}")
    return rec


class CycleGANModal(TransformerMixin, BaseEstimator):
    """Nonlinear modal decomposition learned by a cycle-GAN.

    ``fit`` rotates the displacements with PCA, scales each score into
    [-1, 1] and trains the four networks.  Every ``checkpoint_every`` epochs
    the training data is decomposed and the PSD-cosine criterion of the modal
    coordinates is computed; the checkpoint with the lowest value is kept.

    ``transform`` maps displacements to modal coordinates (decomposition) and
    ``inverse_transform`` maps modal coordinates back (superposition).

    Parameters
    ----------
    hidden : int
        Hidden layer width shared by all four networks.
    lambda_cycle, ortho_weight, ortho_eps, batch_size, epochs, checkpoint_every,
    lr, beta1, beta2, adam_eps :
        Training settings, see :class:`TrainConfig`.
    fs : float
        Sampling rate assumed when ``X`` is a plain array.
    segment_len, overlap_fraction : Welch settings for checkpoint scoring.
    random_state : int or None
        Fixes initialisation, shuffling, latent draws and axis pairs.

    Attributes
    ----------
    pca_, scaler_ : fitted preprocessors
    nets_ : CycleGanNets holding the selected checkpoint
    history_ : list of LossRecord, one per epoch
    checkpoints_ : list of dict with ``epoch``, ``L_cos`` and ``nmse``
    best_epoch_, best_lcos_ : the selected checkpoint
    baseline_lcos_ : criterion value of the PCA scores themselves
    """

    def __init__(self, hidden=100, lambda_cycle=10.0, ortho_weight=1.0, ortho_eps=0.05,
                 batch_size=128, epochs=2000, checkpoint_every=100, lr=1e-3, beta1=0.9,
                 beta2=0.999, adam_eps=1e-8, fs=100.0, segment_len=1024,
                 overlap_fraction=0.5, random_state=None):
        self.hidden = hidden
        self.lambda_cycle = lambda_cycle
        self.ortho_weight = ortho_weight
        self.ortho_eps = ortho_eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.checkpoint_every = checkpoint_every
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.fs = fs
        self.segment_len = segment_len
        self.overlap_fraction = overlap_fraction
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lambda_cycle=self.lambda_cycle, ortho_weight=self.ortho_weight,
            ortho_eps=self.ortho_eps, batch_size=self.batch_size, epochs=self.epochs,
            checkpoint_every=self.checkpoint_every, lr=self.lr, beta1=self.beta1,
            beta2=self.beta2, adam_eps=self.adam_eps,
            seed=0 if self.random_state is None else self.random_state,
        )

    def fit(self, X, y=None, callback=None):
        """Train on displacements ``X`` of shape (n_samples, n_dof).

        ``callback(model, checkpoint_dict)`` is invoked at every checkpoint.
        """
        from .selection import psd_cosine_criterion, CriterionError

        fs = X.fs if isinstance(X, TimeSeriesMatrix) else self.fs
        starts = X.record_starts if isinstance(X, TimeSeriesMatrix) else (0,)
        X = check_array(X.data if isinstance(X, TimeSeriesMatrix) else X, ensure_min_samples=2)
        n = X.shape[1]
        if n < 2:
            raise ValueError("modal decomposition needs at least 2 channels")
        cfg = self.train_config()
        self._fs = float(fs)
        self.n_features_in_ = n
        self.pca_ = CovariancePCA().fit(X)
        self.scaler_ = SymmetricScaler().fit(self.pca_.transform(X))
        Ys = self.scaler_.transform(self.pca_.transform(X))

        seeds = np.random.SeedSequence(self.random_state).spawn(2)
        self.nets_ = CycleGanNets(n, self.hidden, seeds[0], cfg.adam_hyper())
        rng = np.random.default_rng(seeds[1])

        def lcos(U):
            psd = welch_psd(TimeSeriesMatrix(U, fs, "modal", starts), segment_len=self.segment_len,
                            overlap_fraction=self.overlap_fraction)
            try:
                return psd_cosine_criterion(psd)
            except CriterionError:
                return float("nan")

        def checkpoint(epoch):
            U, _ = mlp_forward(self.nets_.G_yu, Ys)
            Yr, _ = mlp_forward(self.nets_.G_uy, U)
            rec = self.pca_.inverse_transform(self.scaler_.inverse_transform(Yr))
            row = {"epoch": epoch, "L_cos": lcos(U), "nmse": nmse(rec, X)}
            self.checkpoints_.append(row)
            logger.info("hidden=%d epoch=%d L_cos=%.5f nmse=%.3f%%",
                        self.hidden, epoch, row["L_cos"], row["nmse"])
            if callback is not None:
                callback(self, row)
            return row

        self.baseline_lcos_ = lcos(Ys)
        self.history_ = []
        self.checkpoints_ = []
        self.initial_nmse_ = checkpoint(0)["nmse"]
        best, best_snap = None, self.nets_.snapshot()
        for epoch in range(1, cfg.epochs + 1):
            self.history_.append(train_epoch(self.nets_, Ys, cfg, rng, epoch))
            if epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs:
                row = checkpoint(epoch)
                if np.isfinite(row["L_cos"]) and (best is None or row["L_cos"] < best["L_cos"]):
                    best, best_snap = row, self.nets_.snapshot()
        if best is None:
            best = self.checkpoints_[0]
        self.nets_.load(best_snap)
        self.best_epoch_ = best["epoch"]
        self.best_lcos_ = best["L_cos"]
        self.best_nmse_ = best["nmse"]
        if self.best_nmse_ > self.initial_nmse_:
            warnings.warn(f"selected checkpoint reconstructs worse than the untrained model "
                          f"({self.best_nmse_:.3f}% > {self.initial_nmse_:.3f}%)",
                          RuntimeWarning, stacklevel=2)
        return self

    def _to_scaled(self, X):
        check_is_fitted(self, "nets_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} channels, got {X.shape[1]}")
        return X

    def transform(self, X):
        """Modal coordinates of displacements ``X``."""
        X = self._to_scaled(X.data if isinstance(X, TimeSeriesMatrix) else X)
        U, _ = mlp_forward(self.nets_.G_yu, self.scaler_.transform(self.pca_.transform(X)))
        return U

    def inverse_transform(self, U):
        """Displacements synthesised from modal coordinates ``U``."""
        U = self._to_scaled(U.data if isinstance(U, TimeSeriesMatrix) else U)
        Ys, _ = mlp_forward(self.nets_.G_uy, U)
        return self.pca_.inverse_transform(self.scaler_.inverse_transform(Ys))

    @property
    def fs_(self):
        return self._fs


def decompose(model: CycleGANModal, natural: TimeSeriesMatrix) -> TimeSeriesMatrix:
    return natural.with_data(model.transform(natural.data), role="modal")


def superpose(model: CycleGANModal, modal: TimeSeriesMatrix) -> TimeSeriesMatrix:
    return modal.with_data(model.inverse_transform(modal.data), role="displacement")
