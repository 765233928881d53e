"""Command-line pipeline: digitize, preprocess, cwt, train, evaluate, predict.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import cwt, ingest
from .autodiff import checkpoint
from .errors import AfDetectError, ArchitectureMismatch, CheckpointError, ConfigError, DataError, ShapeMismatch
from .ingest import Label
from .metrics import evaluate_scores
from .models import build_model
from .sampler import default_branch_count, dump_partition
from .training import FeatureConfig, TrainConfig, extract_features, extract_many, fit, make_model, predict_proba

log = logging.getLogger("afdetect")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
CHECKPOINT_NAME = "model.ckpt"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# helpers


def feature_config(cfg: dict, kind: str | None = None) -> FeatureConfig:
    p, c = cfg["preprocess"], cfg["cwt"]
    kind = kind or cfg["model"]["kind"]
    return FeatureConfig(input="scalogram" if kind.startswith("cwt") else "series", **p, **c)


def load_records(entries, default_fs: float):
    records, failures = [], []
    for e in entries:
        fs = float(e.extra.get("fs", default_fs))
        try:
            records.append(ingest.load_numeric_record(e.path, fs, e.label, e.id))
        except (DataError, OSError) as exc:
            failures.append((e.id, exc))
    return records, failures


def _require(records, failures):
    if failures:
        raise DataError("; ".join(f"{rid}: {exc}" for rid, exc in failures[:5]))
    if not records:
        raise DataError("no records to process")


def load_model(path):
    try:
        tensors, meta = checkpoint.load(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if meta.get("format") != "afdetect-model":
        raise CheckpointError(f"{path} is not a model checkpoint")
    model = build_model(meta["architecture"])
    model.load_state_dict({k: v for k, v in tensors.items() if k.startswith(("param/", "buffer/"))})
    model.astype(np.dtype(meta.get("dtype", "float64")))
    model.eval()
    return model, FeatureConfig(**meta["features"]), meta


def _check_arch(model, feats: dict):
    shape = next(iter(feats.values())).shape
    expected = (1,) + tuple(model.input_shape) if hasattr(model, "input_shape") else (1, model.input_length)
    if shape != expected:
        raise ArchitectureMismatch(f"checkpoint expects inputs of shape {expected}, data gives {shape}")


def write_scores(path, ids, labels, scores):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label", "probability"])
        for i, y, s in zip(ids, labels, scores):
            w.writerow([i, y, repr(float(s))])


# --------------------------------------------------------------------------
# commands


def cmd_digitize(args, cfg):
    src, out = Path(args.image_dir), Path(cfg["out"])
    images = sorted(src.glob("*.pgm"))
    if not images:
        raise DataError(f"no .pgm images in {src}")
    labels = {}
    if (src / "labels.csv").exists():
        with open(src / "labels.csv", newline="") as fh:
            labels = {row["id"]: row["label"] for row in csv.DictReader(fh)}
    (out / "records").mkdir(parents=True, exist_ok=True)
    fs = args.fs or cfg["data"]["fs"]
    entries = []
    for path in images:
        rid = path.stem
        try:
            rec = ingest.digitize(ingest.load_image(path), fs, args.threshold, rid, labels.get(rid, ""))
        except (DataError, ValueError) as exc:
            log.error("%s: %s: %s", path.name, type(exc).__name__, exc)
            continue
        dest = out / "records" / f"{rid}.csv"
        ingest.write_csv_samples(dest, rec.samples)
        extra = {"fs": repr(float(fs))}
        ref = path.with_name(f"{rid}.ref.csv")
        if ref.exists():
            truth = ingest.resample_to_length(ingest.read_samples(ref), rec.samples.size)
            extra["ref_corr"] = f"{np.corrcoef(truth, rec.samples)[0, 1]:.6f}"
        entries.append(ingest.ManifestEntry(rid, str(dest), rec.label, "", extra))
        log.info("digitized %s (%d samples)", path.name, rec.samples.size)
    if not entries:
        raise DataError("no image could be digitized")
    ingest.write_manifest(out / "manifest.csv", ingest.DatasetManifest(entries), ("fs", "ref_corr"))
    print(f"digitized {len(entries)}/{len(images)} images -> {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_preprocess(args, cfg):
    out = Path(cfg["out"])
    manifest = ingest.read_manifest(args.manifest)
    records, failures = load_records(manifest.entries, cfg["data"]["fs"])
    _require(records, failures)
    fcfg = feature_config(cfg, "cnn1d")
    (out / "records").mkdir(parents=True, exist_ok=True)
    from .training import standardized

    entries = []
    for e, rec in zip(manifest.entries, records):
        sig = standardized(rec, fcfg)
        dest = out / "records" / f"{rec.id}.ecg"
        ingest.write_binary_samples(dest, sig.samples)
        entries.append(replace(e, path=str(dest), extra={**e.extra, "fs": repr(sig.fs)}))
    ingest.write_manifest(out / "manifest.csv", ingest.DatasetManifest(entries), ("fs",))
    print(f"preprocessed {len(entries)} records -> {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_cwt(args, cfg):
    out = Path(cfg["out"])
    manifest = ingest.read_manifest(args.manifest)
    records, failures = load_records(manifest.entries, cfg["data"]["fs"])
    _require(records, failures)
    fcfg = feature_config(cfg, "cwt_resnet")
    if args.no_denoise:
        fcfg = replace(fcfg, denoise=False)
    (out / "scalograms").mkdir(parents=True, exist_ok=True)
    feats = extract_many(records, fcfg, cfg["threads"])
    for rid, img in feats.items():
        cwt.write_image_pgm(out / "scalograms" / f"{rid}.pgm", img[0])
        cwt.write_float_grid(out / "scalograms" / f"{rid}.scg", img[0])
    print(f"wrote {len(feats)} scalograms -> {out / 'scalograms'}")
    return EXIT_OK


def _resolve_split(manifest, cfg):
    if all(e.split in ("train", "test") for e in manifest.entries):
        return manifest
    return ingest.split_dataset(manifest, cfg["data"]["test_fraction"], cfg["seed"])


def cmd_train(args, cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if not cfg["data"]["manifest"]:
        raise ConfigError("no dataset manifest given (data.manifest or --manifest)")
    manifest = _resolve_split(ingest.read_manifest(cfg["data"]["manifest"]), cfg)
    records, failures = load_records(manifest.entries, cfg["data"]["fs"])
    _require(records, failures)
    labels = {r.id: r.label.target for r in records}
    train_ids = [e.id for e in manifest.entries if e.split == "train"]
    test_ids = [e.id for e in manifest.entries if e.split == "test"]

    kind = cfg["model"]["kind"]
    n_neg = sum(1 for i in train_ids if labels[i] == 0)
    n_pos = len(train_ids) - n_neg
    if kind in ("cwt_resnet", "cnn1d"):
        n_b = 1
    elif cfg["model"]["n_branches"] == "auto":
        n_b = default_branch_count(n_neg, n_pos)
    else:
        n_b = cfg["model"]["n_branches"]
    resolved = {**cfg, "model": {**cfg["model"], "n_branches": n_b}}
    cfgmod.write_snapshot(out / "resolved_config.toml", resolved)
    ingest.write_manifest(out / "split_manifest.csv", manifest, ("fs",))

    fcfg = feature_config(cfg)
    t0 = time.time()
    feats = extract_many(records, fcfg, cfg["threads"])
    log.info("features for %d records in %.1fs", len(feats), time.time() - t0)
    m = cfg["model"]
    model = make_model(kind, fcfg, n_b, m["widths"], m["cnn_channels"], m["cnn_kernels"])
    t = cfg["train"]
    tcfg = TrainConfig(t["epochs"], t["batch_size"], t["lr"], cfg["seed"], t["precision"],
                       t["repartition_each_epoch"])
    loss_rows = []
    history, mbset, opt = fit(model, feats, labels, train_ids, tcfg,
                              on_epoch=lambda e, loss: loss_rows.append((e + 1, loss)))
    dump_partition(out / "partition.csv", mbset)
    with open(out / "loss_log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        w.writerows((e, repr(loss)) for e, loss in loss_rows)
    save_checkpoint(out / CHECKPOINT_NAME, model, fcfg, kind, t["precision"], opt)
    print(f"trained {kind} (N_b={n_b}) for {t['epochs']} epochs; checkpoint -> {out / CHECKPOINT_NAME}")
    if test_ids and len({labels[i] for i in test_ids}) == 2:
        report = _evaluate(model, feats, test_ids, labels, t["threshold"], out)
        print(f"test AUROC {report.auroc:.4f}  AUPRC {report.auprc:.4f}  F1 {report.f1:.4f}")
    return EXIT_OK


def save_checkpoint(path, model, fcfg, kind, precision, opt=None):
    tensors = dict(model.state_dict())
    meta = {"format": "afdetect-model", "model_kind": kind, "architecture": model.descriptor(),
            "features": asdict(fcfg), "dtype": precision}
    if opt is not None:
        st = opt.state
        meta["optimizer"] = {"name": "adam", "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2,
                             "eps": st.eps, "step": st.step}
        tensors.update({f"adam.m/{k}": v for k, v in st.m.items()})
        tensors.update({f"adam.v/{k}": v for k, v in st.v.items()})
    checkpoint.save(path, tensors, meta)


def _evaluate(model, feats, ids, labels, threshold, out):
    scores = predict_proba(model, feats, ids)
    y = [labels[i] for i in ids]
    report = evaluate_scores(y, scores, threshold)
    report.to_json(out / "report.json")
    report.write_curves(out / "roc.csv", out / "pr.csv")
    write_scores(out / "scores.csv", ids, y, scores)
    return report


def cmd_evaluate(args, cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model, fcfg, meta = load_model(args.checkpoint)
    manifest = ingest.read_manifest(args.manifest)
    entries = manifest.entries if args.split == "all" else manifest.subset(args.split)
    if not entries:
        raise DataError(f"manifest has no entries in split {args.split!r}")
    records, failures = load_records(entries, cfg["data"]["fs"])
    _require(records, failures)
    feats = extract_many(records, fcfg, cfg["threads"])
    _check_arch(model, feats)
    labels = {r.id: r.label.target for r in records}
    report = _evaluate(model, feats, [r.id for r in records], labels,
                       args.threshold if args.threshold is not None else cfg["train"]["threshold"], out)
    print(f"AUROC {report.auroc:.6f}  AUPRC {report.auprc:.6f}  F1 {report.f1:.6f}  "
          f"TP={report.tp} FP={report.fp} TN={report.tn} FN={report.fn}")
    return EXIT_OK


def cmd_predict(args, cfg):
    model, fcfg, meta = load_model(args.checkpoint)
    path = Path(args.record)
    fs = args.fs or cfg["data"]["fs"]
    if path.suffix.lower() == ".pgm":
        rec = ingest.digitize(ingest.load_image(path), fs, record_id=path.stem)
    else:
        rec = ingest.load_numeric_record(path, fs, Label.UNLABELED, path.stem)
    feats = {rec.id: extract_features(rec, fcfg)}
    _check_arch(model, feats)
    p = float(predict_proba(model, feats, [rec.id])[0])
    threshold = args.threshold if args.threshold is not None else 0.5
    label = Label.AF if p >= threshold else Label.NORMAL
    print(f"probability={p!r} label={label.value}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="afdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads for BLAS and feature extraction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("digitize", help="convert PGM chart strips into numeric records")
    p.add_argument("image_dir")
    p.add_argument("--fs", type=float, help="pixel columns per second")
    p.add_argument("--threshold", type=float, default=ingest.DEFAULT_TRACE_THRESHOLD)

    p = sub.add_parser("preprocess", help="denoise and standardize records")
    p.add_argument("manifest")

    p = sub.add_parser("cwt", help="write scalogram images for records")
    p.add_argument("manifest")
    p.add_argument("--no-denoise", action="store_true")

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--manifest")
    p.add_argument("--model", choices=("cwt_mb_resnet", "cwt_resnet", "cnn1d_mb", "cnn1d"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--n-branches", help="'auto' or an integer")
    p.add_argument("--precision", choices=("float64", "float32"))
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    p = sub.add_parser("evaluate", help="score a manifest with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("predict", help="AF probability for one record")
    p.add_argument("checkpoint")
    p.add_argument("record")
    p.add_argument("--fs", type=float)
    p.add_argument("--threshold", type=float)
    return parser


def _overrides(args):
    o = {"seed": args.seed, "out": args.out, "threads": args.threads}
    if args.command == "train":
        nb = args.n_branches
        if nb is not None and nb != "auto":
            try:
                nb = int(nb)
            except ValueError:
                raise ConfigError(f"--n-branches must be 'auto' or an integer, got {nb!r}") from None
        o.update({"data.manifest": args.manifest, "model.kind": args.model, "train.epochs": args.epochs,
                  "train.batch_size": args.batch_size, "train.lr": args.lr, "model.n_branches": nb,
                  "train.precision": args.precision})
    return o


def _limit_threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(n)


COMMANDS = {"digitize": cmd_digitize, "preprocess": cmd_preprocess, "cwt": cmd_cwt,
            "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO)
        cfg = cfgmod.load_config(args.config, _overrides(args))
        if args.command == "train" and args.print_config:
            print(cfgmod.dumps(cfg), end="")
            return EXIT_OK
        _limit_threads(cfg["threads"])
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"afdetect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ArchitectureMismatch, ShapeMismatch, CheckpointError, OSError) as exc:
        print(f"afdetect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AfDetectError as exc:
        print(f"afdetect: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"afdetect: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
