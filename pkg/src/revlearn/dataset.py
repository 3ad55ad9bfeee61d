"""Corpus management and dataset synthesis.

A Manifest records which audio files and RIRs exist, their train/test
split, and the analyzed parameters of every RIR. build_dataset turns a
manifest into shard files of MFCC features plus a JSONL index:

    out/
      manifest.json        resolved manifest (seed, pairing, feature config)
      rir_analysis.jsonl   cached per-RIR parameters, including rejects
      shards/NNN.rvlf      concatenated RVLF feature blobs
      index.jsonl          one row per example: id, shard offsets, targets

All randomness is derived from the manifest seed through stable per-item
hashes, so rebuilding is byte-identical regardless of worker count.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import jsonio
from .errors import DatasetError
from .features import FeatureConfig, FeatureMatrix, mfcc, pack_features, unpack_features
from .rir_analysis import AcousticParams, analyze, validate
from .signal_core import (
    Signal,
    add_noise_at_snr,
    chunk,
    convolve,
    load_audio,
    normalize_minmax,
    trim_to_onset,
)

log = logging.getLogger(__name__)

DEFAULT_SNRS = (15.0, 10.0, 5.0, 0.0)
RT60_BALANCE_RANGE = (0.0, 4.0)
SHARD_SIZE = 512


@dataclass(frozen=True)
class AudioEntry:
    audio_id: str
    path: str
    kind: str  # "speech" | "music"
    split: str  # "train" | "test"


@dataclass(frozen=True)
class RirEntry:
    rir_id: str
    path: str
    split: str
    params: AcousticParams


@dataclass
class Manifest:
    audio: list[AudioEntry]
    rirs: list[RirEntry]
    seed: int
    chunk_seconds: float = 8.0
    pairs_per_chunk: int | None = 4  # None pairs every same-split RIR
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)

    def audio_in(self, split: str) -> list[AudioEntry]:
        return [a for a in self.audio if a.split == split]

    def rirs_in(self, split: str) -> list[RirEntry]:
        return [r for r in self.rirs if r.split == split]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "chunk_seconds": self.chunk_seconds,
            "pairs_per_chunk": self.pairs_per_chunk,
            "feature_config": self.feature_config.to_dict(),
            "audio": [{"audio_id": a.audio_id, "path": a.path,
                       "kind": a.kind, "split": a.split} for a in self.audio],
            "rirs": [{"rir_id": r.rir_id, "path": r.path, "split": r.split,
                      "params": r.params.to_dict()} for r in self.rirs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(
            audio=[AudioEntry(**a) for a in d["audio"]],
            rirs=[RirEntry(r["rir_id"], r["path"], r["split"],
                           AcousticParams.from_dict(r["params"])) for r in d["rirs"]],
            seed=d["seed"],
            chunk_seconds=d["chunk_seconds"],
            pairs_per_chunk=d["pairs_per_chunk"],
            feature_config=FeatureConfig.from_dict(d["feature_config"]),
        )


@dataclass(frozen=True, eq=False)
class Example:
    example_id: str
    features: FeatureMatrix
    targets: tuple[float, float, float, float]  # rt60 s, c50 dB, c80 dB, drr dB
    metadata: dict


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.blake2s(text.encode(), digest_size=8).digest(), "little")


def derive_seed(root_seed: int, *parts) -> int:
    """Stable per-item seed from the root seed and string-able parts."""
    ss = np.random.SeedSequence([root_seed] + [_stable_hash(str(p)) for p in parts])
    return int(ss.generate_state(1)[0])


def split_ids(ids: list[str], rng: np.random.Generator,
              train_frac: float | None = None,
              train_count: int | None = None) -> dict[str, str]:
    """Deterministic shuffled train/test assignment by fraction or count."""
    order = list(ids)
    rng.shuffle(order)
    if train_count is None:
        if train_frac is None:
            train_frac = 0.8
        train_count = int(round(train_frac * len(order)))
    train_count = max(0, min(train_count, len(order)))
    assignment = {i: "train" for i in order[:train_count]}
    assignment.update({i: "test" for i in order[train_count:]})
    return assignment


def _scan_wavs(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*.wav") if p.is_file())


def _audio_kind(rel_path: Path) -> str:
    return "music" if "music" in rel_path.as_posix().lower() else "speech"


def analyze_rir_file(path) -> tuple[AcousticParams, Signal]:
    """Load, onset-trim, and analyze one RIR file."""
    h = trim_to_onset(load_audio(path))
    return analyze(h), h


def build_manifest(audio_dir, rir_dir, seed: int, *,
                   audio_train_frac: float = 0.8,
                   rir_train_frac: float | None = None,
                   rir_train_count: int | None = None,
                   chunk_seconds: float = 8.0,
                   pairs_per_chunk: int | None = 4,
                   feature_config: FeatureConfig | None = None,
                   jobs: int = 1) -> Manifest:
    """Scan corpora, analyze RIRs, and assign deterministic splits.

    RIRs that fail analysis or validation (broadband RT60 above 4 s) are
    excluded with a logged reason.
    """
    audio_root, rir_root = Path(audio_dir), Path(rir_dir)
    audio_paths = _scan_wavs(audio_root)
    rir_paths = _scan_wavs(rir_root)
    if not audio_paths:
        raise DatasetError(f"no WAV files under {audio_root}")
    if not rir_paths:
        raise DatasetError(f"no WAV files under {rir_root}")

    def _analyze(path: Path):
        rid = path.relative_to(rir_root).as_posix()
        try:
            params, _ = analyze_rir_file(path)
        except Exception as exc:
            return rid, path, None, f"{type(exc).__name__}: {exc}"
        verdict = validate(params)
        if not verdict.ok:
            return rid, path, params, verdict.reason
        return rid, path, params, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            analyzed = list(pool.map(_analyze, rir_paths))
    else:
        analyzed = [_analyze(p) for p in rir_paths]

    usable: dict[str, tuple[Path, AcousticParams]] = {}
    for rid, path, params, reason in analyzed:
        if reason is not None:
            log.warning("excluding RIR %s: %s", rid, reason)
        else:
            usable[rid] = (path, params)
    if not usable:
        raise DatasetError("all RIRs were rejected or failed analysis")

    audio_assignment = split_ids(
        [p.relative_to(audio_root).as_posix() for p in audio_paths],
        np.random.default_rng(derive_seed(seed, "audio-split")),
        train_frac=audio_train_frac,
    )
    rir_assignment = split_ids(
        sorted(usable),
        np.random.default_rng(derive_seed(seed, "rir-split")),
        train_frac=rir_train_frac,
        train_count=rir_train_count,
    )

    audio_entries = [
        AudioEntry(rel, (audio_root / rel).as_posix(), _audio_kind(Path(rel)),
                   audio_assignment[rel])
        for rel in sorted(audio_assignment)
    ]
    rir_entries = [
        RirEntry(rid, usable[rid][0].as_posix(), rir_assignment[rid], usable[rid][1])
        for rid in sorted(usable)
    ]
    return Manifest(audio_entries, rir_entries, seed,
                    chunk_seconds=chunk_seconds,
                    pairs_per_chunk=pairs_per_chunk,
                    feature_config=feature_config or FeatureConfig())


def balance(manifest: Manifest, n_bins: int) -> Manifest:
    """Equalize the training-split RT60 histogram by resampling RIR entries.

    Entries are grouped into `n_bins` equal-width bins over 0..4 s; each
    occupied bin is truncated or duplicated to the mean occupied-bin count,
    so the max/min ratio over occupied bins becomes 1. The test split is
    never touched.
    """
    train = manifest.rirs_in("train")
    rest = [r for r in manifest.rirs if r.split != "train"]
    values = [r.params.rt60 for r in train]
    if len(set(values)) < n_bins:
        raise DatasetError(
            f"only {len(set(values))} distinct training RT60 values for {n_bins} bins"
        )
    lo, hi = RT60_BALANCE_RANGE
    width = (hi - lo) / n_bins
    bins: dict[int, list[RirEntry]] = {}
    for entry in train:
        b = min(int((entry.params.rt60 - lo) / width), n_bins - 1)
        bins.setdefault(b, []).append(entry)

    target = max(1, int(round(np.mean([len(v) for v in bins.values()]))))
    rng = np.random.default_rng(derive_seed(manifest.seed, "balance"))
    balanced: list[RirEntry] = []
    for b in sorted(bins):
        entries = list(bins[b])
        rng.shuffle(entries)
        if len(entries) >= target:
            balanced.extend(entries[:target])
        else:
            reps = [entries[i % len(entries)] for i in range(target)]
            balanced.extend(reps)
    return replace(manifest, rirs=balanced + rest)


def synthesize_example(audio_chunk: Signal, rir: Signal, params: AcousticParams,
                       snr_db: float, seed: int,
                       feature_config: FeatureConfig = FeatureConfig(),
                       example_id: str = "", metadata: dict | None = None) -> Example:
    """One training example: reverberate, renormalize, add noise, extract MFCCs.

    The chunk is min-max normalized, convolved with the onset-trimmed RIR,
    truncated back to the chunk length, normalized again, and noise is added
    at `snr_db` before feature extraction. Targets are the RIR's broadband
    parameters, passed through unchanged.
    """
    dry = normalize_minmax(audio_chunk)
    wet = convolve(dry, trim_to_onset(rir))
    wet = Signal(wet.samples[: len(audio_chunk)], wet.sample_rate)
    wet = normalize_minmax(wet)
    noisy = add_noise_at_snr(wet, snr_db, seed)
    feats = mfcc(noisy, feature_config)
    meta = dict(metadata or {})
    meta.setdefault("snr_db", snr_db)
    meta.setdefault("seed", seed)
    return Example(example_id, feats, params.as_tuple(), meta)


def _plan_examples(manifest: Manifest, snr_list) -> list[dict]:
    """Deterministic (chunk x paired RIR x SNR) task list."""
    plan = []
    for split in ("train", "test"):
        rirs = manifest.rirs_in(split)
        if not rirs:
            continue
        for audio in manifest.audio_in(split):
            n_chunks = len(chunk(load_audio(audio.path), manifest.chunk_seconds))
            for ci in range(n_chunks):
                k = manifest.pairs_per_chunk
                if k is None or k >= len(rirs):
                    paired = list(range(len(rirs)))
                else:
                    rng = np.random.default_rng(
                        derive_seed(manifest.seed, "pairing", audio.audio_id, ci))
                    paired = sorted(rng.choice(len(rirs), size=k, replace=False))
                for slot, ri in enumerate(paired):
                    for snr in snr_list:
                        rir = rirs[ri]
                        plan.append({
                            "example_id": f"{audio.audio_id}#c{ci}#{rir.rir_id}"
                                          f"#p{slot}#snr{snr:g}",
                            "audio_id": audio.audio_id,
                            "audio_path": audio.path,
                            "chunk_index": ci,
                            "rir_id": rir.rir_id,
                            "rir_path": rir.path,
                            "targets": rir.params.as_tuple(),
                            "snr_db": float(snr),
                            "split": split,
                            "kind": audio.kind,
                        })
    return plan


def build_dataset(manifest: Manifest, out_dir, snr_list=DEFAULT_SNRS,
                  jobs: int = 1, shard_size: int = SHARD_SIZE) -> int:
    """Synthesize every planned example into shards + index; returns the count.

    Train chunks pair only with train RIRs and test with test. Worker count
    affects speed only; output bytes depend solely on (manifest, snr_list).
    """
    out = Path(out_dir)
    (out / "shards").mkdir(parents=True, exist_ok=True)
    plan = _plan_examples(manifest, snr_list)
    if not plan:
        raise DatasetError("dataset plan is empty (no usable chunk/RIR pairs)")

    # Cache decoded audio/RIR files; the plan visits them repeatedly.
    audio_cache: dict[str, list[Signal]] = {}
    rir_cache: dict[str, Signal] = {}
    params_by_id = {}
    for task in plan:
        if task["audio_path"] not in audio_cache:
            audio_cache[task["audio_path"]] = chunk(
                load_audio(task["audio_path"]), manifest.chunk_seconds)
        if task["rir_path"] not in rir_cache:
            rir_cache[task["rir_path"]] = trim_to_onset(load_audio(task["rir_path"]))
        params_by_id[task["rir_id"]] = task["targets"]

    def _synthesize(task: dict) -> bytes:
        chunk_sig = audio_cache[task["audio_path"]][task["chunk_index"]]
        rir_sig = rir_cache[task["rir_path"]]
        seed = derive_seed(manifest.seed, "noise", task["example_id"])
        task["seed"] = seed
        dry = normalize_minmax(chunk_sig)
        wet = convolve(dry, rir_sig)
        wet = normalize_minmax(Signal(wet.samples[: len(chunk_sig)], wet.sample_rate))
        noisy = add_noise_at_snr(wet, task["snr_db"], seed)
        feats = mfcc(noisy, manifest.feature_config)
        return pack_features(feats.values)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            blobs = list(pool.map(_synthesize, plan))
    else:
        blobs = [_synthesize(t) for t in plan]

    index_rows = []
    shard_idx, offset = 0, 0
    shard_fh = open(out / "shards" / f"{shard_idx:03d}.rvlf", "wb")
    try:
        for i, (task, blob) in enumerate(zip(plan, blobs)):
            if i and i % shard_size == 0:
                shard_fh.close()
                shard_idx += 1
                offset = 0
                shard_fh = open(out / "shards" / f"{shard_idx:03d}.rvlf", "wb")
            shard_fh.write(blob)
            rt60, c50, c80, drr = task["targets"]
            index_rows.append({
                "example_id": task["example_id"],
                "shard": f"{shard_idx:03d}.rvlf",
                "offset": offset,
                "length": len(blob),
                "split": task["split"],
                "kind": task["kind"],
                "audio_id": task["audio_id"],
                "chunk_index": task["chunk_index"],
                "rir_id": task["rir_id"],
                "snr_db": task["snr_db"],
                "seed": task["seed"],
                "targets": {"rt60": rt60, "c50": c50, "c80": c80, "drr": drr},
            })
            offset += len(blob)
    finally:
        shard_fh.close()

    with open(out / "index.jsonl", "w", encoding="utf-8") as fh:
        for row in index_rows:
            fh.write(jsonio.dumps(row) + "\n")
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        fh.write(jsonio.dumps({**manifest.to_dict(), "snr_list": list(snr_list)}) + "\n")
    with open(out / "rir_analysis.jsonl", "w", encoding="utf-8") as fh:
        for r in manifest.rirs:
            fh.write(jsonio.dumps({
                "rir_id": r.rir_id, "path": r.path, "split": r.split,
                "accepted": True, "reason": None, "params": r.params.to_dict(),
            }) + "\n")
    log.info("wrote %d examples in %d shard(s) to %s", len(plan), shard_idx + 1, out)
    return len(plan)


@dataclass(frozen=True, eq=False)
class LoadedDataset:
    example_ids: list[str]
    features: np.ndarray  # (n, frames, coeffs) float32
    targets: np.ndarray   # (n, 4) float64: rt60, c50, c80, drr
    snr_db: np.ndarray
    split: np.ndarray     # array of "train"/"test"
    feature_config: FeatureConfig

    def subset(self, split: str) -> "LoadedDataset":
        mask = self.split == split
        return LoadedDataset(
            [i for i, m in zip(self.example_ids, mask) if m],
            self.features[mask], self.targets[mask], self.snr_db[mask],
            self.split[mask], self.feature_config)

    def __len__(self) -> int:
        return len(self.example_ids)


def load_dataset(dataset_dir) -> LoadedDataset:
    """Read index + shards back into memory; all examples must share a shape."""
    import json

    root = Path(dataset_dir)
    index_path = root / "index.jsonl"
    if not index_path.exists():
        raise DatasetError(f"{index_path} not found")
    rows = [json.loads(line) for line in index_path.read_text().splitlines() if line]
    if not rows:
        raise DatasetError("index.jsonl is empty")
    manifest = json.loads((root / "manifest.json").read_text())
    config = FeatureConfig.from_dict(manifest["feature_config"])

    shard_bytes = {}
    feats, ids, targets, snrs, splits = [], [], [], [], []
    for row in rows:
        shard = row["shard"]
        if shard not in shard_bytes:
            shard_bytes[shard] = (root / "shards" / shard).read_bytes()
        blob = shard_bytes[shard][row["offset"]: row["offset"] + row["length"]]
        feats.append(unpack_features(blob))
        ids.append(row["example_id"])
        t = row["targets"]
        targets.append([t["rt60"], t["c50"], t["c80"], t["drr"]])
        snrs.append(row["snr_db"])
        splits.append(row["split"])
    shapes = {f.shape for f in feats}
    if len(shapes) != 1:
        raise DatasetError(f"mixed feature shapes in dataset: {sorted(shapes)}")
    return LoadedDataset(ids, np.stack(feats).astype(np.float32),
                         np.asarray(targets, dtype=np.float64),
                         np.asarray(snrs, dtype=np.float64),
                         np.asarray(splits), config)
