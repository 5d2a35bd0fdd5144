"""File-based pipeline stages: synth/ingest -> preprocess -> inject -> train -> detect -> eval.

Every stage reads its inputs from, and writes its outputs to, one run
directory, so the stages can be chained by hand or through :func:`run_all`.
All stochastic stages take seeds from the resolved run configuration.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .data import ChannelKind, SynthConfig, generate_synthetic, load_csv, save_csv, select_series, validate
from .detect import apply_threshold, calibrate_threshold, residual_scores, statistical_baseline
from .evaluate import EvalReport, confusion, episode_hits, reference_row, write_table_csv
from .exceptions import DependencyError, IntegrityError, ParameterError
from .inject import AnomalyMask, inject_series
from .models import TrainConfig, build, canonical_name, default_threads, save_history, train
from .nn import ENGINE_TAG, Network
from .preprocess import (
    ScalerParams, apply_scaler, fit_scaler, make_windows, median_filter, noise_floor, split_index, unwrap_angles,
)

log = logging.getLogger(__name__)

DATASET = "dataset.csv"
SERIES = "series.csv"
PREPROCESS = "preprocess.json"
INJECTED = "injected.csv"
MASK = "mask.csv"
MASK_EPISODES = "mask_episodes.json"
INJECT_META = "inject.json"
NETWORK = "network.json"
SCALER = "scaler.json"
HISTORY = "loss_history.csv"
TRAIN_META = "train.json"
SCORES = "scores.csv"
BASELINE = "baseline.csv"
DETECT_META = "detect.json"
REPORT = "report.json"
TABLE = "table.csv"
MANIFEST = "manifest.json"

# "after_filter": bursts are added to the prepared series (the filter never sees them);
# "before_filter": bursts are added to the unfiltered series, which is then filtered
INJECT_ORDERS = ("after_filter", "before_filter")

DEFAULTS = {
    "seed": 0,
    "source": {"synth": {}},
    "channel": None,
    "preprocess": {"filter": True, "filter_order": 15, "window_len": 30, "horizon": 1, "train_fraction": 0.8},
    "inject": {"count": 10, "sigma_multiplier": 5.0, "sigma": None, "seed": None, "max_fraction": 0.05,
               "order": "after_filter"},
    "model": {"name": "CLSTM", "width": 1.0, "bilstm_per_direction": True, "train": {}},
    "detect": {"k": 3.0, "baseline_z": 4.0},
    "evaluate": {"tolerance": 0},
    "matrix": None,
}


# --------------------------------------------------------------------------- config


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def derive_seed(master, *labels):
    """Stable 32-bit seed for a named stage, derived from the master seed."""
    digest = hashlib.sha256(json.dumps([int(master), *map(str, labels)]).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def resolve_config(raw, seed_override=None):
    """Fill defaults and derive every missing seed from the master seed.

    Seeds written explicitly in the configuration are kept as given.
    """
    if "config" in raw and "artifacts" in raw:  # a manifest
        raw = raw["config"]
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ParameterError(f"unknown config sections: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if "source" in raw:
        cfg["source"] = copy.deepcopy(raw["source"])
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    master = int(cfg["seed"])

    ch = cfg.get("channel")
    if not ch or "station" not in ch or "kind" not in ch:
        raise ParameterError("config needs an explicit channel selection: {\"channel\": {\"station\": ..., \"kind\": ...}}")
    ch["kind"] = ChannelKind.parse(ch["kind"]).value
    ch["station"] = str(ch["station"])

    src = cfg["source"]
    if ("synth" in src) == ("csv" in src):
        raise ParameterError("source must contain exactly one of 'synth' or 'csv'")
    if "synth" in src:
        synth = dict(src["synth"])
        synth.setdefault("seed", derive_seed(master, "synth"))
        src["synth"] = SynthConfig.from_dict(synth).to_dict()
    if cfg["inject"]["order"] not in INJECT_ORDERS:
        raise ParameterError(f"inject.order must be one of {INJECT_ORDERS}, got {cfg['inject']['order']!r}")
    if cfg["inject"].get("seed") is None:
        cfg["inject"]["seed"] = derive_seed(master, "inject")
    cfg["model"]["name"] = canonical_name(cfg["model"]["name"])
    tcfg = dict(cfg["model"].get("train") or {})
    tcfg.setdefault("seed", derive_seed(master, "train", cfg["model"]["name"]))
    cfg["model"]["train"] = TrainConfig.from_dict(tcfg).to_dict()
    if cfg.get("matrix"):
        m = cfg["matrix"]
        m["models"] = [canonical_name(n) for n in m.get("models", [cfg["model"]["name"]])]
        m["filtration"] = [bool(f) for f in m.get("filtration", [cfg["preprocess"]["filter"]])]
    return cfg


def load_config(path, seed_override=None):
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"config file not found: {path}", path=str(path))
    return resolve_config(json.loads(path.read_text(encoding="utf-8")), seed_override)


def cell_name(model, filtration):
    return f"{model}_{'filtered' if filtration else 'unfiltered'}"


def cell_config(cfg, model, filtration):
    """Configuration of one matrix cell; the train seed follows the model."""
    out = copy.deepcopy(cfg)
    out["matrix"] = None
    out["preprocess"]["filter"] = bool(filtration)
    if out["model"]["name"] != model:
        out["model"]["name"] = model
        out["model"]["train"]["seed"] = derive_seed(cfg["seed"], "train", model)
    return out


# --------------------------------------------------------------------------- io helpers


def _require(path):
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"missing upstream artifact: {path}", path=str(path))
    return path


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path):
    return json.loads(_require(path).read_text(encoding="utf-8"))


def _write_columns(path, header, columns, int_columns=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            cells = []
            for name, v in zip(header, row):
                cells.append(str(int(v)) if name in int_columns else repr(float(v)))
            fh.write(",".join(cells) + "\n")


def _read_columns(path):
    with open(_require(path), encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------- stages


def stage_synth(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if "synth" not in cfg["source"]:
        raise ParameterError("synth stage needs a 'synth' source in the config")
    synth = SynthConfig.from_dict(cfg["source"]["synth"])
    save_csv(generate_synthetic(synth), out / DATASET)
    return out / DATASET


def stage_ingest(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if "csv" not in cfg["source"]:
        raise ParameterError("ingest stage needs a 'csv' source in the config")
    dataset = load_csv(_require(cfg["source"]["csv"]))
    problems = validate(dataset)
    if problems:
        raise IntegrityError(problems[0])
    save_csv(dataset, out / DATASET)
    return out / DATASET


def stage_source(cfg, out):
    return stage_synth(cfg, out) if "synth" in cfg["source"] else stage_ingest(cfg, out)


def stage_preprocess(cfg, out, dataset_path=None):
    """Select the channel, unwrap angles, optionally median-filter, fix the split."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dataset_path = Path(dataset_path) if dataset_path else out / DATASET
    dataset = load_csv(_require(dataset_path))
    ch, pp = cfg["channel"], cfg["preprocess"]
    raw = select_series(dataset, ch["station"], ch["kind"])
    base = unwrap_angles(raw) if ch["kind"] == ChannelKind.VOLTAGE_ANGLE.value else raw
    prepared = median_filter(base, pp["filter_order"]) if pp["filter"] else base.copy()
    n = prepared.size
    cut = split_index(n, pp["train_fraction"])
    _write_columns(out / SERIES, ("index", "raw", "prepared"), (np.arange(n), raw, prepared), int_columns=("index",))
    meta = {
        "channel": ch,
        "dataset": os.path.relpath(dataset_path, out),
        "dataset_sha256": sha256_file(dataset_path),
        "filter": bool(pp["filter"]),
        "filter_order": int(pp["filter_order"]),
        "unwrapped": ch["kind"] == ChannelKind.VOLTAGE_ANGLE.value,
        "length": int(n),
        "split_index": int(cut),
        "train_fraction": float(pp["train_fraction"]),
        "noise_floor": noise_floor(base),
    }
    _write_json(out / PREPROCESS, meta)
    return meta


def stage_inject(cfg, out):
    """Add Gaussian bursts to the held-out (test) part of the series.

    With ``inject.order == "before_filter"`` the bursts go into the unfiltered
    series and the configured median filter is applied afterwards.
    """
    out = Path(out)
    meta = _read_json(out / PREPROCESS)
    cols = _read_columns(out / SERIES)
    ic = cfg["inject"]
    before = ic.get("order", "after_filter") == "before_filter"
    if before:
        series = unwrap_angles(cols["raw"]) if meta["unwrapped"] else cols["raw"]
    else:
        series = cols["prepared"]
    sigma = ic["sigma"] if ic.get("sigma") is not None else ic["sigma_multiplier"] * meta["noise_floor"]
    cut, n = meta["split_index"], meta["length"]
    injected, mask = inject_series(series, ic["count"], sigma, seed=ic["seed"], region=(cut, n),
                                   max_fraction=ic.get("max_fraction", 0.05))
    if before and meta["filter"]:
        injected = median_filter(injected, meta["filter_order"])
    _write_columns(out / INJECTED, ("index", "value"), (np.arange(n), injected), int_columns=("index",))
    mask.save(out / MASK, out / MASK_EPISODES)
    _write_json(out / INJECT_META, {"count": int(ic["count"]), "sigma": float(sigma), "seed": int(ic["seed"]),
                                    "region": [int(cut), int(n)], "order": ic.get("order", "after_filter")})
    return mask


def stage_train(cfg, out):
    out = Path(out)
    meta = _read_json(out / PREPROCESS)
    values = _read_columns(out / INJECTED)["value"]
    cut = meta["split_index"]
    params = fit_scaler(values[:cut])
    scaled = apply_scaler(values, params)
    pp, mc = cfg["preprocess"], cfg["model"]
    windows = make_windows(scaled[:cut], pp["window_len"], pp["horizon"])
    spec = build(mc["name"], width=mc.get("width", 1.0), bilstm_per_direction=mc.get("bilstm_per_direction", True))
    tcfg = TrainConfig.from_dict(mc["train"])
    net, history = train(spec, windows, tcfg)
    net.save(out / NETWORK)
    _write_json(out / SCALER, params.to_dict())
    save_history(history, out / HISTORY)
    _write_json(out / TRAIN_META, {"model": spec.as_dict(), "train": tcfg.to_dict(), "epochs_run": len(history),
                                   "parameters": net.parameter_count(), "engine": ENGINE_TAG})
    return net, history


def stage_detect(cfg, out):
    """Threshold test-part residuals with a threshold calibrated on training residuals."""
    out = Path(out)
    meta = _read_json(out / PREPROCESS)
    values = _read_columns(out / INJECTED)["value"]
    params = ScalerParams.from_dict(_read_json(out / SCALER))
    net = Network.load(_require(out / NETWORK))
    pp, dc = cfg["preprocess"], cfg["detect"]
    cut, n = meta["split_index"], meta["length"]
    w, h = pp["window_len"], pp["horizon"]
    offset = w + h - 1
    if cut - offset < 0:
        raise ParameterError("training part is shorter than one window")
    scaled = apply_scaler(values, params)
    train_scores = residual_scores(net, make_windows(scaled[:cut], w, h))
    threshold = calibrate_threshold(train_scores, dc["k"])
    # context from the end of the training part so every test sample gets a score
    test_scores = residual_scores(net, make_windows(scaled[cut - offset :], w, h))
    result = apply_threshold(test_scores, threshold, window_offset=offset)
    result.save_csv(out / SCORES, index_offset=cut)

    base_input = values[cut - offset :]
    base_flags = statistical_baseline(base_input, meta["filter_order"], dc["baseline_z"])[offset:]
    _write_columns(out / BASELINE, ("index", "flag"), (np.arange(cut, n), base_flags), int_columns=("index", "flag"))
    _write_json(out / DETECT_META, {
        "threshold": threshold, "k": float(dc["k"]), "window_offset": offset, "first_index": int(cut),
        "train_score_mean": float(train_scores.mean()), "train_score_std": float(train_scores.std()),
        "baseline_z": float(dc["baseline_z"]), "baseline_filter_order": int(meta["filter_order"]),
        "flagged": int(result.flags.sum()),
    })
    return result


def stage_eval(cfg, out):
    out = Path(out)
    meta = _read_json(out / PREPROCESS)
    dmeta = _read_json(out / DETECT_META)
    cols = _read_columns(out / SCORES)
    mask = AnomalyMask.load(_require(out / MASK), _require(out / MASK_EPISODES))
    cut = dmeta["first_index"]
    truth = mask.slice(cut, meta["length"])
    flags = cols["flag"].astype(bool)
    base_flags = _read_columns(out / BASELINE)["flag"].astype(bool)
    tol = int(cfg["evaluate"]["tolerance"])
    counts = confusion(flags, truth, tol)

    neural_hits = episode_hits(flags, truth, tol)
    base_hits = episode_hits(base_flags, truth, tol)
    n_truth = int(truth.flags.sum())
    cross = {
        "neural_timestep_recall": float(flags[truth.flags].mean()) if n_truth else 0.0,
        "baseline_timestep_recall": float(base_flags[truth.flags].mean()) if n_truth else 0.0,
        "episodes": len(truth.episodes),
        "episodes_detected_by_both": int(np.sum(neural_hits & base_hits)),
        "baseline_counts": vars(confusion(base_flags, truth, tol)),
    }
    mc = cfg["model"]
    report = EvalReport.from_counts(mc["name"], meta["filter"], counts, config={
        "threshold_k": float(cfg["detect"]["k"]),
        "threshold": dmeta["threshold"],
        "filter_order": meta["filter_order"],
        "tolerance": tol,
        "scaler": "minmax [0, 1] fitted on the training part",
        "seeds": {"master": int(cfg["seed"]), "inject": int(cfg["inject"]["seed"]),
                  "train": int(mc["train"]["seed"]),
                  "synth": cfg["source"]["synth"]["seed"] if "synth" in cfg["source"] else None},
        "calibration": cross,
    })
    report.save_json(out / REPORT)
    write_table_csv([report], out / TABLE)
    return report


def run_cell(cfg, out, dataset_path=None):
    """preprocess -> inject -> train -> detect -> eval in ``out``."""
    stages = (("preprocess", lambda: stage_preprocess(cfg, out, dataset_path)),
              ("inject", lambda: stage_inject(cfg, out)),
              ("train", lambda: stage_train(cfg, out)),
              ("detect", lambda: stage_detect(cfg, out)),
              ("eval", lambda: stage_eval(cfg, out)))
    result = None
    for name, fn in stages:
        log.info("%s: %s", Path(out).name, name)
        try:
            result = fn()
        except Exception as exc:
            exc.stage = getattr(exc, "stage", name)
            raise
    return result


COMPARISON_HEADER = ("model", "noise_filtration", "recall", "precision", "f1",
                     "reference_recall", "reference_precision", "reference_f1")


def run_all(cfg, out, threads=None):
    """Whole pipeline for every (model, filtration) cell plus a comparison table and manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        dataset_path = stage_source(cfg, out)
    except Exception as exc:
        exc.stage = getattr(exc, "stage", "synth" if "synth" in cfg["source"] else "ingest")
        raise

    matrix = cfg.get("matrix") or {"models": [cfg["model"]["name"]], "filtration": [cfg["preprocess"]["filter"]]}
    cells = [(m, f) for m in matrix["models"] for f in matrix["filtration"]]
    threads = threads or default_threads()

    def job(cell):
        model, filt = cell
        cdir = out / "cells" / cell_name(model, filt)
        cdir.mkdir(parents=True, exist_ok=True)
        return run_cell(cell_config(cfg, model, filt), cdir, dataset_path)

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(job, cells))
    else:
        reports = [job(c) for c in cells]

    _write_json(out / "reports.json", [r.to_dict() for r in reports])
    write_table_csv(reports, out / TABLE)
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(COMPARISON_HEADER) + "\n")
        for rep in reports:
            ref = reference_row(rep.model, rep.noise_filtration)
            ref_cells = (f"{ref.recall:.2f}", f"{ref.precision:.2f}", f"{ref.f1:.2f}") if ref else ("", "", "")
            fh.write(",".join(rep.table_row() + ref_cells) + "\n")
    write_manifest(cfg, out)
    return reports


def write_manifest(cfg, out):
    out = Path(out)
    artifacts = {}
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != MANIFEST and "plots" not in path.relative_to(out).parts:
            artifacts[path.relative_to(out).as_posix()] = sha256_file(path)
    seeds = {"master": int(cfg["seed"]), "inject": int(cfg["inject"]["seed"]),
             "train": int(cfg["model"]["train"]["seed"])}
    if "synth" in cfg["source"]:
        seeds["synth"] = int(cfg["source"]["synth"]["seed"])
    _write_json(out / MANIFEST, {"engine": ENGINE_TAG, "version": __version__, "config": cfg,
                                 "seeds": seeds, "artifacts": artifacts})


# --------------------------------------------------------------------------- plot data


def _cell_dirs(run_dir):
    run_dir = Path(run_dir)
    if (run_dir / PREPROCESS).exists():
        return [run_dir]
    cells = sorted(p for p in (run_dir / "cells").glob("*") if (p / PREPROCESS).exists()) \
        if (run_dir / "cells").exists() else []
    if not cells:
        raise DependencyError(f"no run artifacts under {run_dir} (expected {PREPROCESS})", path=str(run_dir / PREPROCESS))
    return cells


def export_plots(run_dir):
    """Write ``plots/`` CSVs next to each cell's artifacts; returns the written paths."""
    written = []
    for cdir in _cell_dirs(run_dir):
        meta = _read_json(cdir / PREPROCESS)
        dataset = load_csv(_require((cdir / meta["dataset"]).resolve()))
        station, kind = meta["channel"]["station"], meta["channel"]["kind"]
        raw = select_series(dataset, station, kind)
        base = unwrap_angles(raw) if meta["unwrapped"] else raw
        filtered = median_filter(base, meta["filter_order"])
        wrapped = select_series(dataset, station, ChannelKind.VOLTAGE_ANGLE)
        unwrapped = unwrap_angles(wrapped)

        cols = _read_columns(cdir / SCORES)
        dmeta = _read_json(cdir / DETECT_META)
        mask = AnomalyMask.load(_require(cdir / MASK), _require(cdir / MASK_EPISODES))
        truth = mask.slice(dmeta["first_index"], meta["length"]).flags

        pdir = cdir / "plots"
        pdir.mkdir(exist_ok=True)
        n = raw.size
        _write_columns(pdir / "filter_compare.csv", ("index", "raw", "filtered"), (np.arange(n), base, filtered),
                       int_columns=("index",))
        _write_columns(pdir / "angle_compare.csv", ("index", "wrapped", "unwrapped"),
                       (np.arange(n), wrapped, unwrapped), int_columns=("index",))
        _write_columns(pdir / "detections.csv", ("index", "truth_flag", "detected_flag", "score"),
                       (cols["index"], truth, cols["flag"], cols["score"]),
                       int_columns=("index", "truth_flag", "detected_flag"))
        written += [pdir / "filter_compare.csv", pdir / "angle_compare.csv", pdir / "detections.csv"]
    return written
