"""CSV formats, ingestion of external records and the model archive."""
from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .series import TimeSeriesMatrix

ARCHIVE_FORMAT = "cyclemodal.archive/1"


@contextmanager
def atomic_open(path, mode="w", **kwargs):
    """Write to a temporary file next to ``path`` and rename on success."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_table(path, header, columns):
    table = np.column_stack(columns)
    buf = _io.StringIO()
    np.savetxt(buf, table, delimiter=",", fmt="%.17g", header=",".join(header), comments="")
    with atomic_open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_timeseries_csv(ts: TimeSeriesMatrix, path):
    """Header ``t,ch0,ch1,...``; time in seconds."""
    header = ["t"] + [f"ch{i}" for i in range(ts.n_channels)]
    _write_table(path, header, [ts.time] + [ts.data[:, i] for i in range(ts.n_channels)])


def read_timeseries_csv(path, fs=None, role="displacement") -> TimeSeriesMatrix:
    """Read a file written by :func:`write_timeseries_csv`.

    ``fs`` defaults to the rate implied by the ``t`` column.
    """
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if fs is None:
        fs = 1.0 / float(np.median(np.diff(arr[:, 0])))
        fs = float(np.round(fs, 9))
    return TimeSeriesMatrix(arr[:, 1:], fs, role)


def ingest_csv(paths, fs, channel_map=None, role="displacement") -> TimeSeriesMatrix:
    """Validated records from one or more CSV files with a header row.

    Each file is one record (an experiment); records are stacked and their
    boundaries kept for per-record spectral averaging.  ``channel_map`` lists
    the column names (or 0-based indices) to keep, in order; by default every
    column except a leading ``t``/``time`` column is used.  Row numbers in
    error messages count data rows from 1.
    """
    if not fs or fs <= 0:
        raise ValueError(f"fs must be positive, got {fs}")
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    blocks, starts, n_total = [], [], 0
    width = None
    for path in paths:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        if channel_map is None:
            cols = [i for i, h in enumerate(header) if not (i == 0 and h.lower() in ("t", "time"))]
        else:
            cols = []
            for c in channel_map:
                if isinstance(c, int):
                    cols.append(c)
                elif c in header:
                    cols.append(header.index(c))
                else:
                    raise ValueError(f"{path}: no column named {c!r}")
        data = np.empty((len(rows) - 1, len(cols)))
        for r, row in enumerate(rows[1:], start=1):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
            for j, c in enumerate(cols):
                try:
                    data[r - 1, j] = float(row[c])
                except ValueError:
                    raise ValueError(f"{path}: row {r} column {header[c]!r} is not numeric: "
                                     f"{row[c]!r}") from None
            if not np.all(np.isfinite(data[r - 1])):
                raise ValueError(f"{path}: non-finite value in row {r}")
        if width is not None and data.shape[1] != width:
            raise ValueError(f"{path}: {data.shape[1]} channels, previous records had {width}")
        width = data.shape[1]
        if data.shape[0] < 2:
            raise ValueError(f"{path}: need at least 2 data rows")
        blocks.append(data)
        starts.append(n_total)
        n_total += data.shape[0]
    return TimeSeriesMatrix(np.vstack(blocks), fs, role, tuple(starts))


def write_psd_csv(psd, path):
    header = ["freq_hz"] + [f"psd_ch{i}" for i in range(psd.psd.shape[1])]
    _write_table(path, header, [psd.freqs] + [psd.psd[:, i] for i in range(psd.psd.shape[1])])


def write_correlation_csv(cm, path):
    labels = cm.labels
    with atomic_open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + labels)
        for lab, row in zip(labels, cm.values):
            w.writerow([lab] + [repr(float(v)) for v in row])


def write_rows_csv(path, columns, rows):
    with atomic_open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_rows_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


TRAINING_LOG_COLUMNS = ("epoch", "d_y", "d_u", "g_adv_yu", "g_adv_uy", "recon", "ortho",
                        "total", "L_cos_checkpoint")


def write_training_log(model, path):
    lcos = {cp["epoch"]: cp["L_cos"] for cp in model.checkpoints_}
    rows = []
    for rec in model.history_:
        row = rec.as_row()
        row["L_cos_checkpoint"] = lcos.get(rec.epoch, "")
        rows.append(row)
    write_rows_csv(path, TRAINING_LOG_COLUMNS, rows)


def save_model(model, path):
    """Single ``.npz`` archive: the four networks, PCA, scaler and settings."""
    from .modalgan import CycleGANModal  # noqa: F401  (type reference only)

    nets = model.nets_
    meta = {
        "format": ARCHIVE_FORMAT,
        "params": model.get_params(),
        "n_dof": nets.n_dof,
        "hidden": nets.hidden,
        "fs": model.fs_,
        "best_epoch": model.best_epoch_,
        "best_lcos": model.best_lcos_,
        "best_nmse": model.best_nmse_,
        "initial_nmse": model.initial_nmse_,
        "baseline_lcos": model.baseline_lcos_,
        "checkpoints": model.checkpoints_,
        "nets": {name: getattr(nets, name).config() for name in nets.NAMES},
    }
    arrays = {name: getattr(nets, name).theta for name in nets.NAMES}
    arrays.update(
        pca_mean=model.pca_.mean_, pca_components=model.pca_.components_,
        pca_eigenvalues=model.pca_.eigenvalues_,
        scaler_min=model.scaler_.data_min_, scaler_max=model.scaler_.data_max_,
        history=np.array([list(r.as_row().values()) for r in model.history_]).reshape(
            len(model.history_), 8),
    )
    buf = _io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    with atomic_open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    """Inverse of :func:`save_model`; returns a fitted ``CycleGANModal``."""
    from .modalgan import CycleGANModal, CycleGanNets, LossRecord
    from .neural import MlpParams
    from .signal import CovariancePCA, SymmetricScaler

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != ARCHIVE_FORMAT:
            raise ValueError(f"{path}: unsupported archive format {meta.get('format')!r}")
        model = CycleGANModal(**meta["params"])
        nets = CycleGanNets.__new__(CycleGanNets)
        nets.n_dof, nets.hidden, nets.opt = meta["n_dof"], meta["hidden"], {}
        for name in CycleGanNets.NAMES:
            setattr(nets, name, MlpParams(**meta["nets"][name], theta=z[name]))
        pca = CovariancePCA()
        pca.mean_, pca.components_, pca.eigenvalues_ = (
            z["pca_mean"], z["pca_components"], z["pca_eigenvalues"])
        pca.n_features_in_ = pca.mean_.shape[0]
        scaler = SymmetricScaler()
        scaler.data_min_, scaler.data_max_ = z["scaler_min"], z["scaler_max"]
        scaler.n_features_in_ = scaler.data_min_.shape[0]
        history = [LossRecord(int(r[0]), *map(float, r[1:])) for r in z["history"]]
    model.nets_, model.pca_, model.scaler_ = nets, pca, scaler
    model.n_features_in_ = nets.n_dof
    model._fs = meta["fs"]
    model.best_epoch_, model.best_lcos_ = meta["best_epoch"], meta["best_lcos"]
    model.best_nmse_, model.initial_nmse_ = meta["best_nmse"], meta["initial_nmse"]
    model.baseline_lcos_ = meta["baseline_lcos"]
    model.checkpoints_ = meta["checkpoints"]
    model.history_ = history
    return model
