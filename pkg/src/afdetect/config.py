"""Run configuration: TOML file, command-line overrides, resolved snapshot.

Schema (every key optional; defaults shown by ``afdetect train --print-config``)::

    seed = 0                    # governs split, partition, init, batch order
    out = "runs/default"
    threads = 1

    [data]
    manifest = "manifest.csv"   # columns id,path,label[,split][,fs]
    fs = 300.0                  # used when the manifest has no fs column
    test_fraction = 0.2

    [preprocess]  denoise, high_pass_hz, notch_hz, low_pass_hz, filter_order,
                  notch_q, target_length, target_fs
    [cwt]         n_scales, f_min, f_max, fc, image_height, image_width, mode, boundary
    [model]       kind, n_branches ("auto" or int), widths, cnn_channels, cnn_kernels
    [train]       epochs, batch_size, lr, precision, repartition_each_epoch, threshold
"""
from __future__ import annotations

import copy
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .training import MODEL_KINDS

DEFAULTS = {
    "seed": 0,
    "out": "runs/default",
    "threads": 1,
    "data": {"manifest": "", "fs": 300.0, "test_fraction": 0.2},
    "preprocess": {"denoise": True, "high_pass_hz": 0.5, "notch_hz": 60.0, "low_pass_hz": 40.0,
                   "filter_order": 4, "notch_q": 30.0, "target_length": 3000, "target_fs": 300.0},
    "cwt": {"n_scales": 64, "f_min": 1.0, "f_max": 40.0, "fc": 0.25,
            "image_height": 128, "image_width": 128, "mode": "absolute", "boundary": "zero"},
    "model": {"kind": "cwt_mb_resnet", "n_branches": "auto", "widths": [64, 128, 256, 512],
              "cnn_channels": [16, 32, 64], "cnn_kernels": [7, 5, 3]},
    "train": {"epochs": 30, "batch_size": 32, "lr": 1e-3, "precision": "float64",
              "repartition_each_epoch": False, "threshold": 0.5},
}


def _merge(base: dict, override: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be a table")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then ``overrides`` (dotted keys allowed)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                cfg = _merge(cfg, tomllib.load(fh))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    nested = {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = nested
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    cfg = _merge(cfg, nested)
    validate(cfg)
    return cfg


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> None:
    _check(isinstance(cfg["seed"], int), "seed must be an integer")
    _check(isinstance(cfg["threads"], int) and cfg["threads"] >= 1, "threads must be >= 1")
    d, p, c, m, t = cfg["data"], cfg["preprocess"], cfg["cwt"], cfg["model"], cfg["train"]
    _check(d["fs"] > 0, "data.fs must be positive")
    _check(0 <= d["test_fraction"] < 1, "data.test_fraction must be in [0, 1)")
    _check(p["target_fs"] > 0 and p["target_length"] >= 16, "preprocess target_fs/target_length out of range")
    _check(0 < p["high_pass_hz"] < p["low_pass_hz"] < p["target_fs"] / 2, "need 0 < high_pass < low_pass < Nyquist")
    _check(0 < p["notch_hz"] < p["target_fs"] / 2, "notch must lie below Nyquist")
    _check(p["filter_order"] >= 1 and p["notch_q"] > 0, "filter order >= 1 and notch_q > 0 required")
    _check(c["n_scales"] >= 1 and 0 < c["f_min"] < c["f_max"] and c["fc"] > 0, "cwt scale grid out of range")
    _check(c["image_height"] >= 8 and c["image_width"] >= 8, "cwt image must be at least 8x8")
    _check(c["mode"] in ("absolute", "signed"), "cwt.mode must be absolute or signed")
    _check(c["boundary"] in ("zero", "symmetric"), "cwt.boundary must be zero or symmetric")
    _check(m["kind"] in MODEL_KINDS, f"model.kind must be one of {MODEL_KINDS}")
    nb = m["n_branches"]
    _check(nb == "auto" or (isinstance(nb, int) and 1 <= nb <= 16), "model.n_branches must be 'auto' or 1..16")
    _check(len(m["widths"]) == 4 and all(w >= 1 for w in m["widths"]), "model.widths needs four positive widths")
    _check(len(m["cnn_channels"]) == 3 and len(m["cnn_kernels"]) == 3, "1D-CNN needs three stages")
    _check(t["epochs"] >= 1 and t["batch_size"] >= 1 and t["lr"] > 0, "train epochs/batch_size/lr out of range")
    _check(t["precision"] in ("float64", "float32"), "train.precision must be float64 or float32")
    _check(0 <= t["threshold"] <= 1, "train.threshold must be in [0, 1]")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialise {v!r}")


def dumps(cfg: dict) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in cfg.items() if not isinstance(v, dict)]
    for k, v in cfg.items():
        if isinstance(v, dict):
            lines.append(f"\n[{k}]")
            lines += [f"{kk} = {_toml_value(vv)}" for kk, vv in v.items()]
    return "\n".join(lines) + "\n"


def write_snapshot(path, cfg: dict) -> None:
    Path(path).write_text(dumps(cfg))
