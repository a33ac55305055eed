"""Model selection by spectral separation of the modal coordinates.

A decomposition is judged by the cosine similarity between the PSD vectors of
its coordinates, summed over all unordered pairs; lower means better
separated modes.  :func:`run_search` trains a grid of hidden sizes and random
initialisations and keeps the best checkpoint overall.
"""
from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError
from .series import TimeSeriesMatrix
from .signal import PsdMatrix, welch_psd

logger = logging.getLogger(__name__)


class CriterionError(ValueError):
    """The PSD-cosine criterion is undefined (a channel has zero power)."""


def psd_cosine_criterion(psd) -> float:
    """Sum over pairs ``i < j`` of ``PSD_i . PSD_j / (|PSD_i| |PSD_j|)``.

    ``psd`` is a :class:`PsdMatrix` or an array ``[n_freqs, n_channels]``;
    every bin of the one-sided estimate is used.
    """
    P = psd.psd if isinstance(psd, PsdMatrix) else np.asarray(psd, dtype=float)
    if P.ndim != 2 or P.shape[1] < 2:
        raise ValueError("the criterion needs at least two channels")
    norms = np.linalg.norm(P, axis=0)
    zero = np.flatnonzero(~(norms > 0))
    if zero.size:
        raise CriterionError(f"channel(s) {zero.tolist()} have zero PSD norm")
    unit = P / norms
    G = unit.T @ unit
    i, j = np.triu_indices(P.shape[1], k=1)
    return float(G[i, j].sum())


def lcos_of(coords, fs=100.0, segment_len=1024, overlap_fraction=0.5) -> float:
    """Criterion value of raw coordinates (array or :class:`TimeSeriesMatrix`)."""
    if not isinstance(coords, TimeSeriesMatrix):
        coords = TimeSeriesMatrix(np.asarray(coords), fs, "modal")
    return psd_cosine_criterion(welch_psd(coords, segment_len=segment_len,
                                          overlap_fraction=overlap_fraction))


def evaluate_checkpoint(model, eval_data, segment_len=None, overlap_fraction=None) -> float:
    """Decompose ``eval_data`` with ``model`` and score the modal PSDs."""
    if not isinstance(eval_data, TimeSeriesMatrix):
        eval_data = TimeSeriesMatrix(np.asarray(eval_data), model.fs, "displacement")
    modal = eval_data.with_data(model.transform(eval_data.data), role="modal")
    return lcos_of(modal, segment_len=segment_len or model.segment_len,
                   overlap_fraction=model.overlap_fraction if overlap_fraction is None
                   else overlap_fraction)


def pca_baseline(eval_data, segment_len=1024, overlap_fraction=0.5) -> float:
    """Criterion value of the PCA scores (linear modal analysis)."""
    from .signal import CovariancePCA

    scores = CovariancePCA().fit_transform(eval_data.data)
    return lcos_of(eval_data.with_data(scores, role="pca-score"), segment_len=segment_len,
                   overlap_fraction=overlap_fraction)


@dataclass
class SearchConfig:
    hidden_sizes: list = field(default_factory=lambda: list(range(50, 201, 10)))
    inits_per_size: int = 20
    train: dict = field(default_factory=dict)
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not self.hidden_sizes or any(int(h) < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be a non-empty list of positive integers")
        if self.inits_per_size < 1:
            raise ValueError("inits_per_size must be >= 1")
        self.hidden_sizes = [int(h) for h in self.hidden_sizes]

    def cell_seed(self, hidden, init) -> int:
        """Seed of one grid cell; depends only on (master seed, hidden, init)."""
        ss = np.random.SeedSequence([int(self.seed), int(hidden), int(init)])
        return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class SearchLedger:
    rows: list = field(default_factory=list)
    winner: dict | None = None
    winner_model: object = None
    baseline_lcos: float | None = None

    COLUMNS = ("hidden", "init", "epoch", "L_cos", "status", "archive_path")

    def completed(self):
        return [r for r in self.rows if r["status"] == "ok" and np.isfinite(r["L_cos"])]


def _train_cell(hidden, init, seed, data, train_kwargs):
    from .modalgan import CycleGANModal

    model = CycleGANModal(hidden=hidden, random_state=seed, fs=data.fs, **train_kwargs)
    try:
        model.fit(data)
    except (NumericalError, FloatingPointError) as exc:
        return hidden, init, None, f"failed: {exc}"
    return hidden, init, model, "ok"


def run_search(cfg: SearchConfig, data: TimeSeriesMatrix, out_dir=None) -> SearchLedger:
    """Train every (hidden size, init) cell and pick the global best checkpoint.

    Each cell keeps its own best checkpoint; the winner minimises the
    criterion over all cells, ties going to the smaller hidden size and then
    the lower init index.  Failed cells are recorded but do not stop the
    search.  With ``out_dir`` each cell's selected model is archived there.
    """
    from .io import save_model

    cells = list(itertools.product(cfg.hidden_sizes, range(cfg.inits_per_size)))
    jobs = [(h, i, cfg.cell_seed(h, i), data, dict(cfg.train)) for h, i in cells]
    if cfg.n_jobs == 1:
        results = [_train_cell(*job) for job in jobs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=cfg.n_jobs)(delayed(_train_cell)(*job) for job in jobs)

    ledger = SearchLedger()
    best_key = None
    for hidden, init, model, status in results:
        if model is None:
            ledger.rows.append({"hidden": hidden, "init": init, "epoch": -1,
                                "L_cos": float("nan"), "status": status, "archive_path": ""})
            logger.warning("cell hidden=%d init=%d %s", hidden, init, status)
            continue
        if ledger.baseline_lcos is None:
            ledger.baseline_lcos = model.baseline_lcos_
        path = ""
        if out_dir is not None:
            path = os.path.join(str(out_dir), f"model_h{hidden}_i{init}.npz")
            save_model(model, path)
        for cp in model.checkpoints_:
            if cp["epoch"] == 0 and model.best_epoch_ != 0:
                continue
            ledger.rows.append({"hidden": hidden, "init": init, "epoch": cp["epoch"],
                                "L_cos": cp["L_cos"], "status": "ok",
                                "archive_path": path if cp["epoch"] == model.best_epoch_ else ""})
        key = (model.best_lcos_, hidden, init)
        if np.isfinite(model.best_lcos_) and (best_key is None or key < best_key):
            best_key = key
            ledger.winner = {"hidden": hidden, "init": init, "epoch": model.best_epoch_,
                             "L_cos": model.best_lcos_, "nmse": model.best_nmse_,
                             "archive_path": path}
            ledger.winner_model = model
    return ledger
