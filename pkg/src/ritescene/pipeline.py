"""End-to-end orchestration: shots -> background model -> SIFT -> codes -> classifier.

Per-sample work runs in a process pool; everything that consumes several
samples (dictionary learning, encoding, training, reports) runs in the
calling process in sample order, so outputs do not depend on the worker
count.
"""
from __future__ import annotations

import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import bgfg, classify, encoding, evalreport, sift
from .config import PipelineConfig
from .imaging import Frame, FrameSequence, load_sequence, luminance, rgb_to_hsi, write_image
from .shotseg import ShotList, detect_shots, export_shots, parse_shots
from .synth import CLASSES

logger = logging.getLogger(__name__)

BUNDLE_VERSION = 1


class BundleError(ValueError):
    """Unreadable, corrupt or incompatible bundle."""


@dataclass
class KeyframeResult:
    index: int
    background: Frame  # RGB
    mask: np.ndarray  # uint8, 1 = foreground
    foreground: Frame  # RGB frame with background zeroed
    fallback: bool = False


@dataclass
class SampleResult:
    shots: ShotList
    keyframes: list[KeyframeResult]


@dataclass
class SampleDescriptors:
    """Background (and optionally foreground) descriptors per keyframe."""

    shots: ShotList
    keyframes: list[int]
    background: list[np.ndarray]
    foreground: list[np.ndarray] = field(default_factory=list)

    def stacked(self) -> np.ndarray:
        """All distinct background descriptors (repeated keyframe images count once)."""
        blocks = []
        for i, b in enumerate(self.background):
            if len(b) and not (i and np.array_equal(b, self.background[i - 1])):
                blocks.append(b)
        return np.concatenate(blocks) if blocks else np.zeros((0, 128))


# -- per-sample phases -----------------------------------------------------------

def segment_shots(frames: Sequence[Frame], shots: ShotList, cfg: PipelineConfig) -> list[KeyframeResult]:
    """Fit a background model per shot and render it at every keyframe."""
    sc = cfg.segment
    results = []
    for shot in shots.shots:
        keyset = set(shot.keyframes)
        if len(shot) < sc.n_frames:
            logger.warning("shot [%d, %d) has %d frames, fewer than %d; using keyframes as background",
                           shot.start, shot.end, len(shot), sc.n_frames)
            for i in shot.keyframes:
                zeros = np.zeros(frames[i].shape, dtype=np.uint8)
                results.append(KeyframeResult(i, frames[i], zeros, bgfg.masked_frame(frames[i], zeros), True))
            continue
        fit = [rgb_to_hsi(frames[i]) for i in range(shot.start, shot.start + sc.n_frames)]
        model = bgfg.fit_background(fit, sc.eps, sc.rho)
        last_key = max(shot.keyframes)
        rendered = None  # background image of the current model state
        for i in range(shot.start, last_key + 1):
            in_fit = i < shot.start + sc.n_frames
            if not in_fit or i in keyset:
                hsi = fit[i - shot.start] if in_fit else rgb_to_hsi(frames[i])
                mask = bgfg.segment_frame(model, hsi, sc.window, sc.thr, sc.channel, sc.flat_rms)
                if i in keyset:
                    if rendered is None:
                        rendered = model.background_image()
                    results.append(KeyframeResult(i, rendered, mask,
                                                  bgfg.masked_frame(frames[i], mask)))
                if not in_fit:
                    model = bgfg.update_background(model, hsi, mask)
                    rendered = None
    return results


def process_frames(frames: Sequence[Frame], cfg: PipelineConfig) -> SampleResult:
    shots = detect_shots(frames, cfg.shot)
    return SampleResult(shots, segment_shots(frames, shots, cfg))


def _descriptors(image: Frame, params: sift.PyramidParams) -> np.ndarray:
    return sift.descriptor_matrix(sift.extract(luminance(image), params))


def describe_frames(frames: Sequence[Frame], cfg: PipelineConfig, foreground: bool = False) -> SampleDescriptors:
    result = process_frames(frames, cfg)
    seen: dict[int, np.ndarray] = {}  # keyframes sharing a model state share one image
    bg = []
    for k in result.keyframes:
        if id(k.background) not in seen:
            seen[id(k.background)] = _descriptors(k.background, cfg.sift)
        bg.append(seen[id(k.background)])
    fg = [_descriptors(k.foreground, cfg.sift) for k in result.keyframes] if foreground else []
    return SampleDescriptors(result.shots, [k.index for k in result.keyframes], bg, fg)


def read_frames(directory: str | Path, cfg: PipelineConfig) -> list[Frame]:
    seq = load_sequence(directory, cfg.run.pattern, cfg.run.fps)
    return seq.frames()


def describe_sample(directory: str | Path, cfg: PipelineConfig) -> SampleDescriptors:
    return describe_frames(read_frames(directory, cfg), cfg)


def _describe_job(args) -> SampleDescriptors:
    directory, flat = args
    return describe_sample(directory, PipelineConfig.from_flat(flat))


def describe_many(directories: Sequence[str | Path], cfg: PipelineConfig) -> list[SampleDescriptors]:
    """Describe samples in order, using ``run.workers`` processes."""
    workers = min(cfg.run.workers, max(len(directories), 1))
    if workers <= 1:
        return [describe_sample(d, cfg) for d in directories]
    flat = cfg.to_flat()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_describe_job, [(str(d), flat) for d in directories]))


# -- dataset layout -------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    label: str
    path: Path

    @property
    def name(self) -> str:
        return f"{self.label}/{self.path.name}"


def discover_samples(root: str | Path, pattern: str = "frame_*.ppm") -> list[Sample]:
    """``root/<label>/<sample>/frames``; sorted by label then sample name."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    samples = []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for sample_dir in sorted(p for p in label_dir.iterdir() if p.is_dir()):
            if any(sample_dir.glob(pattern)):
                samples.append(Sample(label_dir.name, sample_dir))
    if not samples:
        raise FileNotFoundError(f"no samples found under {root}")
    return samples


def vocabulary_for(labels: Iterable[str]) -> tuple[str, ...]:
    found = set(labels)
    if found <= set(CLASSES):
        return CLASSES
    return tuple(sorted(found))


# -- dictionary, features, bundles ------------------------------------------------

def fit_dictionary(described: Sequence[SampleDescriptors], cfg: PipelineConfig) -> encoding.Dictionary:
    pool = [d.stacked() for d in described]
    X = np.concatenate(pool) if pool else np.zeros((0, 128))
    ec = cfg.encode
    if X.shape[0] < ec.atoms:
        raise ValueError(f"only {X.shape[0]} training descriptors for {ec.atoms} dictionary atoms")
    if X.shape[0] > ec.max_descriptors:
        rng = np.random.default_rng([cfg.run.seed, 1])
        X = X[np.sort(rng.choice(X.shape[0], ec.max_descriptors, replace=False))]
    return encoding.learn_dictionary(X, ec.atoms, ec.lam, ec.iterations, cfg.run.seed, ec.learn_sweeps)


def image_features(described: Sequence[SampleDescriptors], dictionary: encoding.Dictionary) -> np.ndarray:
    return np.stack([f.values for f in encoding.encode_images([d.stacked() for d in described], dictionary)])


def train_model(features: np.ndarray, labels: Sequence[str], vocabulary: Sequence[str],
                cfg: PipelineConfig, kind: str | None = None) -> classify.TrainedModel:
    kind = kind or cfg.classifier.kind
    data = classify.LabeledDataset(features, list(labels), tuple(vocabulary))
    return classify.multiclass_train(data, kind, cfg.classifier.hyperparams(kind, cfg.run.seed))


def make_bundle(dictionary: encoding.Dictionary, model: classify.TrainedModel, cfg: PipelineConfig,
                train_counts: dict[str, int]) -> dict:
    snapshot = cfg.to_flat(semantic_only=True)
    snapshot["classifier.kind"] = model.kind
    return {
        "version": BUNDLE_VERSION,
        "config": snapshot,
        "vocabulary": list(model.vocabulary),
        "train_counts": train_counts,
        "dictionary": dictionary.to_dict(),
        "classifier": model.to_dict(),
    }


def dump_bundle(bundle: dict) -> str:
    return json.dumps(bundle, sort_keys=True, indent=1) + "\n"


@dataclass
class LoadedBundle:
    config: PipelineConfig
    dictionary: encoding.Dictionary
    model: classify.TrainedModel
    train_counts: dict[str, int]
    raw: dict


def parse_bundle(text: str) -> LoadedBundle:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError(f"bundle is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "version" not in raw:
        raise BundleError("bundle has no version field")
    if raw["version"] != BUNDLE_VERSION:
        raise BundleError(f"unsupported bundle version {raw['version']!r}")
    try:
        cfg = PipelineConfig.from_flat(raw["config"])
        dictionary = encoding.Dictionary.from_dict(raw["dictionary"])
        model = classify.TrainedModel.from_dict(raw["classifier"])
        counts = {str(k): int(v) for k, v in raw["train_counts"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"malformed bundle: {exc}") from exc
    if model.dim and model.dim != dictionary.n_atoms:
        raise BundleError(f"classifier expects {model.dim} features, dictionary has {dictionary.n_atoms} atoms")
    return LoadedBundle(cfg, dictionary, model, counts, raw)


def load_bundle(path: str | Path) -> LoadedBundle:
    return parse_bundle(Path(path).read_text())


# -- commands ----------------------------------------------------------------------

@dataclass
class TrainResult:
    bundles: dict[str, dict]  # kind -> bundle document
    dictionary: encoding.Dictionary
    features: np.ndarray
    labels: list[str]
    train_accuracy: dict[str, float]


def train_from_samples(samples: Sequence[Sample], cfg: PipelineConfig,
                       kinds: Sequence[str] | None = None) -> TrainResult:
    """Extract once, learn one dictionary, train each requested classifier kind."""
    kinds = list(kinds or [cfg.classifier.kind])
    labels = [s.label for s in samples]
    if len(set(labels)) < 2:
        raise ValueError("training needs at least two labelled classes")
    described = describe_many([s.path for s in samples], cfg)
    dictionary = fit_dictionary(described, cfg)
    feats = image_features(described, dictionary)
    vocab = vocabulary_for(labels)
    counts = {c: labels.count(c) for c in vocab if c in labels}
    bundles, acc = {}, {}
    for kind in kinds:
        model = train_model(feats, labels, vocab, cfg, kind)
        preds = [p for p, _ in model.predict_many(feats)]
        acc[kind] = 100.0 * np.mean([p == t for p, t in zip(preds, labels)])
        logger.info("%s training accuracy %.1f%%", kind, acc[kind])
        bundles[kind] = make_bundle(dictionary, model, cfg, counts)
    return TrainResult(bundles, dictionary, feats, labels, acc)


def run_train(data_root: str | Path, cfg: PipelineConfig, out: str | Path,
              kinds: Sequence[str] | None = None) -> dict[str, Path]:
    samples = discover_samples(data_root, cfg.run.pattern)
    result = train_from_samples(samples, cfg, kinds)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind, bundle in result.bundles.items():
        path = out / f"bundle_{kind}.json"
        path.write_text(dump_bundle(bundle))
        paths[kind] = path
    (out / "train_summary.json").write_text(json.dumps(
        {"samples": len(samples), "train_accuracy": result.train_accuracy}, sort_keys=True, indent=1) + "\n")
    return paths


@dataclass
class Prediction:
    sample: str
    label: str
    confidence: float


def classify_described(bundle: LoadedBundle, described: Sequence[SampleDescriptors],
                       names: Sequence[str]) -> list[Prediction]:
    feats = image_features(described, bundle.dictionary)
    if bundle.model.dim and feats.shape[1] != bundle.model.dim:
        raise BundleError(f"feature size {feats.shape[1]} does not match classifier input {bundle.model.dim}")
    return [Prediction(n, *bundle.model.predict(f)) for n, f in zip(names, feats)]


def sample_dirs_under(path: str | Path, pattern: str) -> list[Path]:
    """A frame directory itself, or every descendant directory holding frames."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"not a directory: {path}")
    if any(path.glob(pattern)):
        return [path]
    dirs = sorted({p.parent for p in path.rglob(pattern)})
    if not dirs:
        raise FileNotFoundError(f"no frames matched {pattern!r} under {path}")
    return dirs


def run_classify(bundle_path: str | Path, input_dir: str | Path, workers: int | None = None) -> list[Prediction]:
    bundle = load_bundle(bundle_path)
    cfg = bundle.config
    if workers:
        cfg = cfg.with_values({"run.workers": workers})
    dirs = sample_dirs_under(input_dir, cfg.run.pattern)
    root = Path(input_dir)
    names = [str(d.relative_to(root)) if d != root else d.name for d in dirs]
    return classify_described(bundle, describe_many(dirs, cfg), names)


def predictions_json(preds: Sequence[Prediction]) -> str:
    return json.dumps([{"sample": p.sample, "label": p.label, "confidence": p.confidence} for p in preds],
                      indent=1) + "\n"


@dataclass
class EvalResult:
    reports: dict[str, evalreport.MetricsReport]
    comparison: list[evalreport.ComparisonRow]
    predictions: dict[str, list[Prediction]]


def evaluate_bundles(bundles: Sequence[LoadedBundle], samples: Sequence[Sample],
                     workers: int | None = None) -> EvalResult:
    """Classify every sample with every bundle; extraction is shared between
    bundles with identical feature settings."""
    cache: dict[str, list[SampleDescriptors]] = {}
    reports, preds = {}, {}
    train_counts: dict[str, int] = {}
    truths = [s.label for s in samples]
    for b in bundles:
        cfg = b.config
        if workers:
            cfg = cfg.with_values({"run.workers": workers})
        key = json.dumps({k: v for k, v in cfg.to_flat(semantic_only=True).items()
                          if not k.startswith(("classifier.", "knn.", "ann.", "svm.", "encode."))}, sort_keys=True)
        if key not in cache:
            cache[key] = describe_many([s.path for s in samples], cfg)
        p = classify_described(b, cache[key], [s.name for s in samples])
        vocab = list(b.model.vocabulary)
        for t in truths:
            if t not in vocab:
                vocab.append(t)
        counts = evalreport.confusion_counts([x.label for x in p], truths, vocab)
        present = {c: v for c, v in counts.items() if c in truths or v.false}
        kind = b.model.kind
        reports[kind] = evalreport.MetricsReport(present, kind, "per-class recognition")
        preds[kind] = p
        train_counts.update(b.train_counts)
    return EvalResult(reports, evalreport.comparison_rows(reports, train_counts), preds)


def run_eval(bundle_paths: Sequence[str | Path], data_root: str | Path, out: str | Path,
             workers: int | None = None) -> EvalResult:
    bundles = [load_bundle(p) for p in bundle_paths]
    samples = discover_samples(data_root, bundles[0].config.run.pattern)
    result = evaluate_bundles(bundles, samples, workers)
    write_eval(result, out)
    return result


def write_eval(result: EvalResult, out: str | Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for kind, rep in result.reports.items():
        (out / f"report_{kind}.csv").write_text(evalreport.emit_report(rep, "csv"))
        (out / f"report_{kind}.json").write_text(evalreport.emit_report(rep, "json"))
        (out / f"predictions_{kind}.json").write_text(predictions_json(result.predictions[kind]))
    (out / "comparison.csv").write_text(evalreport.emit_comparison(result.comparison, "csv"))
    (out / "comparison.json").write_text(evalreport.emit_comparison(result.comparison, "json"))


def run_preprocess(input_dir: str | Path, cfg: PipelineConfig, out: str | Path) -> ShotList:
    frames = read_frames(input_dir, cfg)
    shots = detect_shots(frames, cfg.shot)
    out = Path(out)
    (out / "keyframes").mkdir(parents=True, exist_ok=True)
    (out / "shots.json").write_text(export_shots(shots) + "\n")
    seq = load_sequence(input_dir, cfg.run.pattern)
    for i in shots.keyframes:
        shutil.copyfile(seq.paths[i], out / "keyframes" / seq.paths[i].name)
    return shots


def load_shots(path: str | Path) -> ShotList:
    return parse_shots(Path(path).read_text())


def run_segment(input_dir: str | Path, cfg: PipelineConfig, out: str | Path,
                shots: ShotList | None = None) -> list[KeyframeResult]:
    """Write background_/mask_/foreground_ images for every keyframe.

    ``shots`` resumes from a previously exported shot report.
    """
    frames = read_frames(input_dir, cfg)
    if shots is None:
        shots = detect_shots(frames, cfg.shot)
    elif shots.length != len(frames):
        raise ValueError(f"shot report covers {shots.length} frames, input has {len(frames)}")
    results = segment_shots(frames, shots, cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for k in results:
        write_image(out / f"background_{k.index:06d}.ppm", k.background)
        write_image(out / f"mask_{k.index:06d}.pgm", bgfg.mask_frame(k.mask))
        write_image(out / f"foreground_{k.index:06d}.ppm", k.foreground)
    return results


def run_features(input_dir: str | Path, cfg: PipelineConfig, out: str | Path,
                 bundle_path: str | Path | None = None) -> SampleDescriptors:
    """Dump background and foreground descriptors (JSON lines per keyframe);
    with a bundle, also the pooled background feature vector."""
    frames = read_frames(input_dir, cfg)
    result = process_frames(frames, cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "shots.json").write_text(export_shots(result.shots) + "\n")
    bg, fg = [], []
    for k in result.keyframes:
        for side, image, acc in (("background", k.background, bg), ("foreground", k.foreground, fg)):
            feats = sift.extract(luminance(image), cfg.sift)
            (out / f"{side}_{k.index:06d}.jsonl").write_text(sift.dump_descriptors(feats))
            acc.append(sift.descriptor_matrix(feats))
    described = SampleDescriptors(result.shots, [k.index for k in result.keyframes], bg, fg)
    if bundle_path is not None:
        bundle = load_bundle(bundle_path)
        feat = encoding.encode_image(described.stacked(), bundle.dictionary)
        (out / "feature.json").write_text(json.dumps(
            {"n_descriptors": feat.n_descriptors, "values": [float(v) for v in feat.values]}) + "\n")
    return described


def load_feature_dump(directory: str | Path) -> SampleDescriptors:
    """Re-ingest a ``run_features`` output directory."""
    directory = Path(directory)
    shots = load_shots(directory / "shots.json")
    bg, fg = [], []
    for i in shots.keyframes:
        bg.append(sift.descriptor_matrix(sift.load_descriptors((directory / f"background_{i:06d}.jsonl").read_text())))
        fg.append(sift.descriptor_matrix(sift.load_descriptors((directory / f"foreground_{i:06d}.jsonl").read_text())))
    return SampleDescriptors(shots, list(shots.keyframes), bg, fg)
