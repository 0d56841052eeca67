"""End-to-end orchestration: dataset -> descriptors -> encoder -> pooling -> SVM."""

import hashlib
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import classify, deepnet, dsift, pooling, sae
from ..dataset import load_dataset, make_split, resize_dataset, synth_glyphs, write_dataset
from ..errors import BofError, CompatibilityError, ConfigurationError, StageError
from . import plots, report
from .config import dump_config

ENCODER_FILE = "encoder.gfde"
SVM_FILE = "svm.gfsv"
CONFIG_FILE = "config.txt"
ABLATION_CONDITIONS = ("shallow-unsup", "shallow-sup", "deep-unsup", "deep-sup")


@contextmanager
def stage(name, timing):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (BofError, ValueError, OSError, SystemError) as exc:
        raise StageError(name, exc) from exc
    finally:
        timing[name] = timing.get(name, 0.0) + time.perf_counter() - start


def echo(cfg):
    return dump_config(cfg, include_seeds=True, exclude=("out_dir",))


class DescriptorCache:
    """Per-image descriptor sets kept in memory, training samples also on disk.

    Descriptor vectors are float32 whether freshly extracted or read back
    from a GFDS dump, so cached and uncached runs feed identical values
    downstream.
    """

    def __init__(self, cache_dir=None):
        self.cache_dir = None if cache_dir is None else Path(cache_dir)
        self._sets = {}
        self._samples = {}

    def descriptor_sets(self, ds, sift, timing):
        misses = 0
        sets = []
        for img in ds.images:
            key = (img.source_id, img.label, sift.step, tuple(sift.patch_sizes))
            if key not in self._sets:
                self._sets[key] = dsift.extract_dense(img, sift.step, sift.patch_sizes)
                misses += 1
            sets.append(self._sets[key])
        timing.setdefault("flags", {})["descriptors_extracted"] = misses
        return sets

    @staticmethod
    def fingerprint(cfg, train):
        h = hashlib.sha256()
        h.update(echo_sample_key(cfg).encode())
        for img in train.images:
            h.update(f"{img.source_id}:{img.label};".encode())
        return h.hexdigest()[:16]

    def training_sample(self, cfg, train, sets, timing):
        fp = self.fingerprint(cfg, train)
        flags = timing.setdefault("flags", {})
        if fp in self._samples:
            flags["sample_cache"] = "memory"
            return self._samples[fp]
        path = None if self.cache_dir is None else self.cache_dir / f"sample_{fp}.gfds"
        if path is not None and path.exists():
            X = dsift.load_descriptors(path)
            labels = np.fromfile(path.with_suffix(".labels"), dtype="<u4").astype(np.int64)
            flags["sample_cache"] = "disk"
        else:
            X, labels = dsift.sample_from_sets(sets, cfg.sample_n, cfg.stage_seed("sample"))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                dsift.save_descriptors(path, X)
                labels.astype("<u4").tofile(path.with_suffix(".labels"))
            flags["sample_cache"] = "miss"
        self._samples[fp] = (X, labels)
        return X, labels


def echo_sample_key(cfg):
    return (f"{Path(cfg.dataset_root).resolve()}|{cfg.side}|{cfg.split.train_per_class}|"
            f"{cfg.split.test_per_class}|{cfg.sift.step}|{tuple(cfg.sift.patch_sizes)}|"
            f"{cfg.sample_n}|{cfg.seed}")


@dataclass
class TrainResult:
    encoder: deepnet.DeepEncoder
    svm: classify.LinearSvmModel
    report: report.RunReport
    features: list = field(default_factory=list)


def check_dataset_root(cfg):
    if not cfg.dataset_root or not Path(cfg.dataset_root).is_dir():
        raise StageError("config", ConfigurationError(f"dataset_root not found: {cfg.dataset_root!r}"))


def prepare(cfg, timing):
    check_dataset_root(cfg)
    with stage("config", timing):
        cfg.validate()
    with stage("load", timing):
        ds = resize_dataset(load_dataset(cfg.dataset_root), cfg.side)
    with stage("split", timing):
        train, test = make_split(ds, cfg.split_spec())
    return ds, train, test


def fit_encoder(cfg, X, labels, num_classes, timing, depth=2, supervised=None):
    supervised = cfg.fine_tune.enabled if supervised is None else supervised
    with stage("sae1", timing):
        layer1 = sae.train(X, cfg.sae_config("sae1"))
    layer2 = None
    if depth == 2:
        with stage("sae2", timing):
            layer2 = sae.train(sae.hidden(layer1, X), cfg.sae_config("sae2"))
    enc = deepnet.DeepEncoder(layer1, layer2)
    if supervised:
        with stage("finetune", timing):
            enc = deepnet.fine_tune(enc, X, labels, cfg.fine_tune_config(), num_classes)
    return enc


def pooled_features(enc, sets, spm):
    feats = []
    for s in sets:
        codes = deepnet.encode_rows(enc, s.vectors)
        feats.append(pooling.spm_max_pool(codes, s.positions[:, 0], s.positions[:, 1], spm,
                                          s.image_label, s.image_id))
    return feats


def classify_split(cfg, enc, svm, sets, class_names, timing, split_name):
    with stage("encode_pool", timing):
        feats = pooled_features(enc, sets, cfg.spm_config())
    with stage("evaluate", timing):
        accuracy, cm = classify.evaluate(svm, feats, class_names)
    return report.RunReport(accuracy, cm.per_class_accuracy(), cm, timing, echo(cfg), split_name), feats


def run_train(cfg, cache=None, depth=2, supervised=None):
    """Train encoder and SVM on the training split; report training-set numbers."""
    timing = {}
    cache = DescriptorCache() if cache is None else cache
    ds, train, _ = prepare(cfg, timing)
    with stage("extract", timing):
        sets = cache.descriptor_sets(train, cfg.sift, timing)
    with stage("sample", timing):
        X, labels = cache.training_sample(cfg, train, sets, timing)
    enc = fit_encoder(cfg, X, labels, ds.num_classes, timing, depth, supervised)
    with stage("encode_pool", timing):
        feats = pooled_features(enc, sets, cfg.spm_config())
    with stage("svm", timing):
        svm = classify.train_svm(feats, cfg.svm_config(), ds.num_classes)
    with stage("evaluate", timing):
        accuracy, cm = classify.evaluate(svm, feats, ds.class_names)
    rep = report.RunReport(accuracy, cm.per_class_accuracy(), cm, timing, echo(cfg), "train")
    return TrainResult(enc, svm, rep, feats)


def run_eval(cfg, enc, svm, which="test", cache=None):
    timing = {}
    cache = DescriptorCache() if cache is None else cache
    ds, train, test = prepare(cfg, timing)
    part = {"train": train, "test": test}[which]
    with stage("compatibility", timing):
        check_compatible(cfg, enc, svm, ds.num_classes)
    with stage("extract", timing):
        sets = cache.descriptor_sets(part, cfg.sift, timing)
    rep, feats = classify_split(cfg, enc, svm, sets, ds.class_names, timing, which)
    return rep, feats


def check_compatible(cfg, enc, svm, num_classes):
    if enc.input_dim != dsift.DESCRIPTOR_DIM:
        raise CompatibilityError(f"encoder input {enc.input_dim} != descriptor dim {dsift.DESCRIPTOR_DIM}")
    expected = cfg.spm_config().dim(enc.code_size)
    if svm.D != expected:
        raise CompatibilityError(
            f"SVM expects {svm.D}-dim features but encoder and pyramid give {expected}"
        )
    if svm.C != num_classes:
        raise CompatibilityError(f"SVM has {svm.C} classes, dataset has {num_classes}")


# --------------------------------------------------------------------------
# Commands


def cmd_train(cfg, cache=None):
    out = Path(cfg.out_dir)
    check_dataset_root(cfg)
    result = run_train(cfg, cache)
    out.mkdir(parents=True, exist_ok=True)
    deepnet.save_encoder(out / ENCODER_FILE, result.encoder)
    classify.save_svm(out / SVM_FILE, result.svm)
    (out / CONFIG_FILE).write_text(dump_config(cfg))
    pooling.save_features(out / "train_features.gfpf", result.features)
    report.write_run_report(result.report, out, "train")
    return result


def cmd_eval(cfg, model_dir=None, which="test", cache=None):
    model_dir = Path(cfg.out_dir if model_dir is None else model_dir)
    check_dataset_root(cfg)
    timing = {}
    with stage("load_model", timing):
        enc = deepnet.load_encoder(model_dir / ENCODER_FILE)
        svm = classify.load_svm(model_dir / SVM_FILE)
    rep, feats = run_eval(cfg, enc, svm, which, cache)
    rep.timing.update(timing)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pooling.save_features(out / f"{which}_features.gfpf", feats)
    report.write_run_report(rep, out, f"eval_{which}")
    return rep


def train_and_test(cfg, cache, depth=2, supervised=None):
    result = run_train(cfg, cache, depth, supervised)
    rep, _ = run_eval(cfg, result.encoder, result.svm, "test", cache)
    return result, rep


def cmd_sweep_dict(cfg, k_list, cache=None, write=True):
    """Full pipeline per dictionary size with shared split and descriptor cache."""
    k_list = [int(k) for k in k_list]
    if not k_list:
        raise StageError("config", ConfigurationError("K list must be non-empty"))
    check_dataset_root(cfg)
    out = Path(cfg.out_dir)
    cache = DescriptorCache(out / "cache") if cache is None else cache
    rows = []
    for K in k_list:
        start = time.perf_counter()
        run_cfg = cfg.replace(dict_size=K)
        result, rep = train_and_test(run_cfg, cache)
        rows.append({
            "K": K,
            "accuracy": rep.accuracy,
            "wall_time": time.perf_counter() - start,
            "descriptors_extracted": result.report.timing["flags"]["descriptors_extracted"],
            "sample_cache": result.report.timing["flags"]["sample_cache"],
        })
    if write:
        out.mkdir(parents=True, exist_ok=True)
        report.write_table(out / "sweep_dict.csv", rows, ("K", "accuracy", "wall_time"))
        report.write_table(out / "sweep_dict_log.csv", rows,
                           ("K", "descriptors_extracted", "sample_cache"))
        plots.plot_sweep(rows, out / "sweep_dict.png")
    return rows


def ablation_encoders(cfg, X, labels, num_classes, timing):
    """The four depth x supervision encoders, sharing every pretrained layer."""
    with stage("sae1", timing):
        layer1 = sae.train(X, cfg.sae_config("sae1"))
    with stage("sae2", timing):
        layer2 = sae.train(sae.hidden(layer1, X), cfg.sae_config("sae2"))
    ft = cfg.fine_tune_config()
    shallow = deepnet.DeepEncoder(layer1)
    deep = deepnet.DeepEncoder(layer1, layer2)
    with stage("finetune", timing):
        return {
            "shallow-unsup": shallow,
            "shallow-sup": deepnet.fine_tune(shallow, X, labels, ft, num_classes),
            "deep-unsup": deep,
            "deep-sup": deepnet.fine_tune(deep, X, labels, ft, num_classes),
        }


def cmd_ablate(cfg, cache=None, write=True):
    timing = {}
    cache = DescriptorCache() if cache is None else cache
    ds, train, test = prepare(cfg, timing)
    with stage("extract", timing):
        train_sets = cache.descriptor_sets(train, cfg.sift, timing)
        test_sets = cache.descriptor_sets(test, cfg.sift, timing)
    with stage("sample", timing):
        X, labels = cache.training_sample(cfg, train, train_sets, timing)
    encoders = ablation_encoders(cfg, X, labels, ds.num_classes, timing)
    spm = cfg.spm_config()
    rows = []
    for name in ABLATION_CONDITIONS:
        enc = encoders[name]
        with stage("encode_pool", timing):
            f_train = pooled_features(enc, train_sets, spm)
            f_test = pooled_features(enc, test_sets, spm)
        with stage("svm", timing):
            svm = classify.train_svm(f_train, cfg.svm_config(), ds.num_classes)
        with stage("evaluate", timing):
            accuracy, _ = classify.evaluate(svm, f_test, ds.class_names)
        rows.append({"condition": name, "accuracy": accuracy})
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_table(out / "ablate.csv", rows, ("condition", "accuracy"))
        report.write_timing(out / "ablate_timing.json", timing)
        plots.plot_ablation(rows, out / "ablate.png")
    return rows


def cmd_synth(out_dir, num_classes=10, per_class=20, side=90, seed=1):
    timing = {}
    with stage("synth", timing):
        ds = synth_glyphs(num_classes, per_class, side, seed)
        return write_dataset(ds, out_dir)
