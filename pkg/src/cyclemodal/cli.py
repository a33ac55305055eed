"""Command-line front end: ``cyclemodal {simulate,ingest,train,evaluate,report}``.

Every stage works inside one run directory and records what it wrote in
``manifest.json``.  Failures exit non-zero after printing one JSON line to
stderr (``{"error": ..., "stage": ..., "type": ...}``).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys

import numpy as np
import yaml

from . import __version__
from .config import load_config, resolve, search_config, system_spec
from .dynamics import simulate
from .io import (atomic_open, ingest_csv, load_model, read_timeseries_csv, write_correlation_csv,
                 write_psd_csv, write_rows_csv, write_timeseries_csv, write_training_log)
from .metrics import dcor_matrix, nmse, pearson_matrix
from .selection import SearchLedger, lcos_of, run_search
from .series import TimeSeriesMatrix
from .signal import welch_psd

logger = logging.getLogger("cyclemodal")

MANIFEST = "manifest.json"


class StageError(RuntimeError):
    pass


# manifest helpers -----------------------------------------------------------

def _manifest_path(run_dir):
    return os.path.join(run_dir, MANIFEST)


def read_manifest(run_dir) -> dict:
    path = _manifest_path(run_dir)
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


def _update_manifest(run_dir, cfg, stage, files, **extra):
    man = read_manifest(run_dir)
    man["tool"] = "cyclemodal"
    man["version"] = __version__
    man["seed"] = cfg["seed"]
    man["config"] = cfg
    stages = man.setdefault("stages", {})
    stages[stage] = {"files": sorted(files), "finished": _dt.datetime.now().isoformat(), **extra}
    for key, value in extra.items():
        if key in ("winner", "summary"):
            man[key] = value
    with atomic_open(_manifest_path(run_dir), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True, default=float)
    return man


def _rel(run_dir, path):
    return os.path.relpath(path, run_dir)


def _data_meta(run_dir):
    path = os.path.join(run_dir, "data", "meta.json")
    if not os.path.exists(path):
        raise StageError("no datasets found; run `simulate` or `ingest` first")
    with open(path) as fh:
        return json.load(fh)


def _load_split(run_dir, meta, split):
    info = meta["splits"].get(split)
    if info is None:
        return None
    ts = read_timeseries_csv(os.path.join(run_dir, info["file"]), fs=meta["fs"], role=meta["role"])
    return TimeSeriesMatrix(ts.data, meta["fs"], meta["role"], tuple(info["record_starts"]))


# stages ----------------------------------------------------------------------

def cmd_simulate(cfg, run_dir):
    """Two independently excited records of the configured chain."""
    if cfg["dataset"] is not None:
        raise StageError("config has a `dataset` section; use `ingest` instead")
    spec = system_spec(cfg)
    sim = cfg["simulation"]
    files, splits = [], {}
    for split, n_key, seed_key in (("train", "n_train", "train_seed"),
                                   ("test", "n_test", "test_seed")):
        ts = simulate(spec, sim[n_key], sim["fs"], sim["std"], sim["band"], sim[seed_key],
                      sim["dt_sub"], sim["warmup"])
        path = os.path.join(run_dir, "data", f"{split}.csv")
        write_timeseries_csv(ts, path)
        files.append(_rel(run_dir, path))
        splits[split] = {"file": _rel(run_dir, path), "record_starts": [0],
                         "seed": sim[seed_key], "n_samples": ts.n_samples}
    meta = {"fs": sim["fs"], "role": "displacement", "source": "simulation",
            "system": spec.to_dict(), "splits": splits}
    meta_path = os.path.join(run_dir, "data", "meta.json")
    with atomic_open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    files.append(_rel(run_dir, meta_path))
    _update_manifest(run_dir, cfg, "simulate", files)
    return splits


def cmd_ingest(cfg, run_dir):
    """Validate external CSV records and store them in the run directory."""
    ds = cfg["dataset"]
    if ds is None:
        raise StageError("config has no `dataset` section")
    files, splits = [], {}
    for split in ("train", "test"):
        if not ds[split]:
            continue
        ts = ingest_csv(ds[split], ds["fs"], ds["channels"], ds["role"])
        path = os.path.join(run_dir, "data", f"{split}.csv")
        write_timeseries_csv(ts, path)
        files.append(_rel(run_dir, path))
        splits[split] = {"file": _rel(run_dir, path), "record_starts": list(ts.record_starts),
                         "sources": [os.fspath(p) for p in np.atleast_1d(ds[split])],
                         "n_samples": ts.n_samples}
    meta = {"fs": ds["fs"], "role": ds["role"], "source": "ingest", "splits": splits}
    meta_path = os.path.join(run_dir, "data", "meta.json")
    with atomic_open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    files.append(_rel(run_dir, meta_path))
    _update_manifest(run_dir, cfg, "ingest", files)
    return splits


def cmd_train(cfg, run_dir) -> SearchLedger:
    """Grid search over hidden sizes and initialisations on the training split."""
    meta = _data_meta(run_dir)
    train = _load_split(run_dir, meta, "train")
    model_dir = os.path.join(run_dir, "search", "models")
    ledger = run_search(search_config(cfg), train, out_dir=model_dir)
    for row in ledger.rows:
        if row["archive_path"]:
            row["archive_path"] = _rel(run_dir, row["archive_path"])
    ledger_path = os.path.join(run_dir, "search", "ledger.csv")
    write_rows_csv(ledger_path, SearchLedger.COLUMNS, ledger.rows)
    files = [_rel(run_dir, ledger_path)]
    files += sorted({r["archive_path"] for r in ledger.rows if r["archive_path"]})
    if ledger.winner is None:
        _update_manifest(run_dir, cfg, "train", files, status="all cells failed")
        raise StageError("every search cell failed; see search/ledger.csv")
    winner = dict(ledger.winner, archive_path=_rel(run_dir, ledger.winner["archive_path"]),
                  baseline_lcos=ledger.baseline_lcos)
    log_path = os.path.join(run_dir, "search", "training_log.csv")
    write_training_log(ledger.winner_model, log_path)
    win_path = os.path.join(run_dir, "search", "winner.json")
    with atomic_open(win_path, "w") as fh:
        json.dump(winner, fh, indent=2, sort_keys=True)
    files += [_rel(run_dir, log_path), _rel(run_dir, win_path)]
    _update_manifest(run_dir, cfg, "train", files, winner=winner)
    return ledger


def cmd_evaluate(cfg, run_dir) -> dict:
    """Spectra, superposition error and correlations of the winning model."""
    man = read_manifest(run_dir)
    if "winner" not in man:
        raise StageError("no trained model recorded; run `train` first")
    meta = _data_meta(run_dir)
    model = load_model(os.path.join(run_dir, man["winner"]["archive_path"]))
    train = _load_split(run_dir, meta, "train")
    test = _load_split(run_dir, meta, "test") or train
    w = cfg["welch"]
    welch = dict(segment_len=w["segment_len"], overlap_fraction=w["overlap_fraction"],
                 window=w["window"])
    out = os.path.join(run_dir, "report")
    files = []

    def emit_psd(name, ts):
        psd = welch_psd(ts, **welch)
        path = os.path.join(out, f"psd_{name}.csv")
        write_psd_csv(psd, path)
        files.append(_rel(run_dir, path))
        return psd

    pca_scores = test.with_data(model.pca_.transform(test.data), role="pca-score")
    modal = test.with_data(model.transform(test.data), role="modal")
    recon = test.with_data(model.inverse_transform(modal.data))
    emit_psd("natural", test)
    emit_psd("pca", pca_scores)
    modal_psd = emit_psd("modal", modal)

    pear = pearson_matrix(modal.data)
    dcor = dcor_matrix(modal.data, cfg["metrics"]["dcor_subsample"], seed=cfg["seed"])
    for cm, name in ((pear, "pearson"), (dcor, "distance")):
        path = os.path.join(out, f"correlation_{name}.csv")
        write_correlation_csv(cm, path)
        files.append(_rel(run_dir, path))

    n_show = min(test.n_samples, 2000)
    rec_path = os.path.join(out, "reconstruction.csv")
    cols = ["t"] + [f"y_ch{i}" for i in range(test.n_channels)] + \
        [f"yhat_ch{i}" for i in range(test.n_channels)]
    rows = [dict(zip(cols, map(float, np.concatenate([[t], a, b]))))
            for t, a, b in zip(test.time[:n_show], test.data[:n_show], recon.data[:n_show])]
    write_rows_csv(rec_path, cols, rows)
    files.append(_rel(run_dir, rec_path))

    summary = {
        "winner_hidden": man["winner"]["hidden"],
        "winner_init": man["winner"]["init"],
        "winner_epoch": man["winner"]["epoch"],
        "L_cos_train": model.best_lcos_,
        "L_cos_test": lcos_of(modal, **{k: welch[k] for k in ("segment_len", "overlap_fraction")}),
        "L_cos_pca_train": model.baseline_lcos_,
        "L_cos_pca_test": lcos_of(pca_scores, segment_len=welch["segment_len"],
                                  overlap_fraction=welch["overlap_fraction"]),
        "nmse_test_percent": nmse(recon.data, test.data),
        "modal_peak_hz": modal_psd.peak_frequencies().tolist(),
        "max_offdiag_pearson": pear.max_off_diagonal(),
        "max_offdiag_dcor": dcor.max_off_diagonal(),
        "dcor_subsample": dcor.n_used,
    }
    sum_path = os.path.join(out, "summary.json")
    with atomic_open(sum_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    files.append(_rel(run_dir, sum_path))
    if cfg["metrics"]["svg"]:
        from .plots import render_report

        files += [_rel(run_dir, p) for p in render_report(out)]
    _update_manifest(run_dir, cfg, "evaluate", files, summary=summary)
    return summary


def cmd_report(run_dir, stream=None) -> int:
    """Print a one-page summary straight from the manifest."""
    stream = stream or sys.stdout
    man = read_manifest(run_dir)
    if not man:
        raise StageError(f"no manifest in {run_dir}")
    inventory = [f for st in man.get("stages", {}).values() for f in st["files"]]
    missing = [f for f in inventory if not os.path.exists(os.path.join(run_dir, f))]
    p = lambda *a: print(*a, file=stream)
    p(f"cyclemodal {man['version']}  run: {run_dir}  seed: {man['seed']}")
    win = man.get("winner")
    if win:
        p(f"winner: hidden={win['hidden']} init={win['init']} epoch={win['epoch']} "
          f"L_cos={win['L_cos']!r}")
    s = man.get("summary")
    if s:
        p(f"L_cos train={s['L_cos_train']!r} test={s['L_cos_test']!r} "
          f"(PCA train={s['L_cos_pca_train']!r} test={s['L_cos_pca_test']!r})")
        p(f"NMSE (test) = {s['nmse_test_percent']!r} %")
        p(f"max |off-diagonal| pearson={s['max_offdiag_pearson']!r} "
          f"distance={s['max_offdiag_dcor']!r} (n={s['dcor_subsample']})")
    p("files:")
    for f in inventory:
        p(f"  {'MISSING ' if f in missing else ''}{f}")
    if missing:
        raise StageError(f"missing files: {', '.join(missing)}")
    return 0


# entry point -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="cyclemodal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "ingest", "train", "evaluate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", help="run directory (overrides output_dir)")
    sp = sub.add_parser("report")
    sp.add_argument("--run-dir", help="run directory")
    sp.add_argument("--config", help="YAML run configuration (to locate output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "report":
            run_dir = args.run_dir or (load_config(args.config)["output_dir"] if args.config
                                       else None)
            if run_dir is None:
                raise StageError("report needs --run-dir or --config")
            return cmd_report(run_dir)
        cfg = load_config(args.config)
        if args.out:
            cfg["output_dir"] = args.out
        run_dir = cfg["output_dir"]
        os.makedirs(run_dir, exist_ok=True)
        with atomic_open(os.path.join(run_dir, "config.resolved.yaml"), "w") as fh:
            yaml.safe_dump(cfg, fh, sort_keys=True)
        stage = {"simulate": cmd_simulate, "ingest": cmd_ingest, "train": cmd_train,
                 "evaluate": cmd_evaluate}[args.command]
        result = stage(cfg, run_dir)
        if args.command == "evaluate":
            print(json.dumps(result, sort_keys=True))
        return 0
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(json.dumps({"error": str(exc), "stage": args.command, "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
