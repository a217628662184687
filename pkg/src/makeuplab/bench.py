"""Benchmark harness: seeded pairing, metric suite and report emission.

Metrics per (source, reference, generated) row:

- l2m: mean per-pixel Euclidean sRGB distance over non-facial pixels
  (background preservation; lower is better)
- clip_i: cosine of image embeddings, generated vs reference (makeup proxy)
- face_sim: cosine of face embeddings, generated vs source (identity proxy)
- cxf: clip_i * face_sim (joint score; both must be high)

Rows whose artifacts are missing are flagged and excluded from the
aggregate means rather than zero-filled.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ShapeMismatchError
from .imgcore import ImageBuf
from .providers import Embedding
from .verifier import FaceRegionMask

IMAGE_TAG = "image-embed-v1"
FACE_TAG = "face-embed-v1"

# callable (path, model_tag) -> Embedding
Embedder = Callable[[str, str], Embedding]


@dataclass(frozen=True)
class SourceEntry:
    path: str
    skin_tone_label: str
    gender_label: str
    pose_label: str


@dataclass(frozen=True)
class ReferenceEntry:
    path: str
    style_label: str


@dataclass(frozen=True)
class BenchManifest:
    sources: tuple[SourceEntry, ...]
    references: tuple[ReferenceEntry, ...]
    skin_tone_vocab: tuple[str, ...]
    gender_vocab: tuple[str, ...]
    pose_vocab: tuple[str, ...]
    style_vocab: tuple[str, ...]
    root: str = "."

    def __post_init__(self):
        paths = [s.path for s in self.sources] + [r.path for r in self.references]
        if len(paths) != len(set(paths)):
            raise ValueError("manifest paths must be unique")
        for s in self.sources:
            if s.skin_tone_label not in self.skin_tone_vocab:
                raise ValueError(f"unknown skin tone label: {s.skin_tone_label}")
            if s.gender_label not in self.gender_vocab:
                raise ValueError(f"unknown gender label: {s.gender_label}")
            if s.pose_label not in self.pose_vocab:
                raise ValueError(f"unknown pose label: {s.pose_label}")
        for r in self.references:
            if r.style_label not in self.style_vocab:
                raise ValueError(f"unknown style label: {r.style_label}")


def save_manifest(path: str | Path, manifest: BenchManifest) -> None:
    payload = {
        "root": manifest.root,
        "skin_tone_vocab": list(manifest.skin_tone_vocab),
        "gender_vocab": list(manifest.gender_vocab),
        "pose_vocab": list(manifest.pose_vocab),
        "style_vocab": list(manifest.style_vocab),
        "sources": [asdict(s) for s in manifest.sources],
        "references": [asdict(r) for r in manifest.references],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def load_manifest(path: str | Path) -> BenchManifest:
    p = json.loads(Path(path).read_text(encoding="utf-8"))
    return BenchManifest(
        sources=tuple(SourceEntry(**s) for s in p["sources"]),
        references=tuple(ReferenceEntry(**r) for r in p["references"]),
        skin_tone_vocab=tuple(p["skin_tone_vocab"]),
        gender_vocab=tuple(p["gender_vocab"]),
        pose_vocab=tuple(p["pose_vocab"]),
        style_vocab=tuple(p["style_vocab"]),
        root=p.get("root", "."),
    )


# ---------------------------------------------------------------------------
# Pairing and scalar metrics
# ---------------------------------------------------------------------------


def make_pairs(
    manifest: BenchManifest, n: int, seed: int
) -> list[tuple[SourceEntry, ReferenceEntry]]:
    """n uniform (source, reference) pairs, sampled with replacement."""
    if not manifest.sources or not manifest.references:
        raise ValueError("manifest needs at least one source and one reference")
    rng = np.random.default_rng(seed)
    si = rng.integers(0, len(manifest.sources), n)
    ri = rng.integers(0, len(manifest.references), n)
    return [(manifest.sources[i], manifest.references[j]) for i, j in zip(si, ri)]


def l2m(gen: ImageBuf, src: ImageBuf, mask: FaceRegionMask) -> float:
    """Mean per-pixel sRGB color distance over non-facial pixels."""
    if gen.data.shape[:2] != src.data.shape[:2]:
        raise ShapeMismatchError("generated and source dimensions must match")
    non_facial = ~mask.facial()
    if not non_facial.any():
        raise ValueError("no non-facial pixels for l2m")
    diff = gen.color[non_facial] - src.color[non_facial]
    return float(np.linalg.norm(diff, axis=1).mean())


def cxf(c: float, f: float) -> float:
    return c * f


def minmax_normalize(scores: dict[str, float]) -> dict[str, float]:
    """(x - min) / (max - min) across methods; all-equal maps to all zeros."""
    if not scores:
        raise ValueError("need at least one method")
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        return {k: 0.0 for k in scores}
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


def entropy_bits(counts: list[int] | list[float]) -> float:
    arr = np.asarray(counts, dtype=np.float64)
    if arr.min() < 0 or arr.sum() <= 0:
        raise ValueError("counts must be nonnegative with positive total")
    p = arr[arr > 0] / arr.sum()
    return float(-(p * np.log2(p)).sum())


def bench_stats(manifest: BenchManifest) -> dict:
    """Composition statistics: tone entropy, gender and style percentages."""
    tone_counts = {t: 0 for t in manifest.skin_tone_vocab}
    gender_counts = {g: 0 for g in manifest.gender_vocab}
    style_counts = {s: 0 for s in manifest.style_vocab}
    for s in manifest.sources:
        tone_counts[s.skin_tone_label] += 1
        gender_counts[s.gender_label] += 1
    for r in manifest.references:
        style_counts[r.style_label] += 1
    n_src = len(manifest.sources)
    n_ref = len(manifest.references)
    return {
        "source_count": n_src,
        "reference_count": n_ref,
        "skin_tone_counts": tone_counts,
        "skin_tone_entropy_bits": entropy_bits(list(tone_counts.values())),
        "gender_percent": {g: 100.0 * c / n_src for g, c in gender_counts.items()},
        "style_percent": {s: 100.0 * c / n_ref for s, c in style_counts.items()},
    }


# ---------------------------------------------------------------------------
# Run evaluation
# ---------------------------------------------------------------------------


@dataclass
class PairRow:
    index: int
    src_path: str
    ref_path: str
    gen_path: str
    ok: bool
    l2m: float = math.nan
    clip_i: float = math.nan
    face_sim: float = math.nan
    cxf: float = math.nan
    error: str = ""


@dataclass
class MethodReport:
    method: str
    rows: list[PairRow]
    aggregates: dict[str, float] = field(default_factory=dict)
    failed_count: int = 0


def evaluate_run(
    method: str,
    pairs: list[tuple[str, str]],
    generated: list[str],
    masks: list[FaceRegionMask | None],
    embed: Embedder,
    load_image: Callable[[str], ImageBuf] | None = None,
) -> MethodReport:
    """Score one method's generated images against their pairs.

    ``pairs`` holds (src_path, ref_path); ``generated`` and ``masks`` align
    by index (a None mask or missing file flags the row).  ``embed`` maps
    (path, model_tag) to an embedding; clip_i embeds full images, face_sim
    embeds the face crops the embedder chooses to see.
    """
    if not len(pairs) == len(generated) == len(masks):
        raise ShapeMismatchError("pairs, generated and masks must align")
    if load_image is None:
        from .imgcore import read_png

        load_image = read_png

    rows: list[PairRow] = []
    for i, ((src_path, ref_path), gen_path, mask) in enumerate(zip(pairs, generated, masks)):
        row = PairRow(index=i, src_path=src_path, ref_path=ref_path, gen_path=gen_path, ok=True)
        try:
            if mask is None:
                raise FileNotFoundError("missing parsing mask")
            gen_img = load_image(gen_path)
            src_img = load_image(src_path)
            row.l2m = l2m(gen_img, src_img, mask)
            from .rewards import cosine_similarity

            row.clip_i = cosine_similarity(embed(gen_path, IMAGE_TAG), embed(ref_path, IMAGE_TAG))
            row.face_sim = cosine_similarity(embed(gen_path, FACE_TAG), embed(src_path, FACE_TAG))
            row.cxf = cxf(row.clip_i, row.face_sim)
        except Exception as exc:  # noqa: BLE001 - row-level isolation is the contract
            row.ok = False
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    ok_rows = [r for r in rows if r.ok]
    aggregates = {}
    if ok_rows:
        for key in ("l2m", "clip_i", "face_sim", "cxf"):
            aggregates[key] = float(np.mean([getattr(r, key) for r in ok_rows]))
    return MethodReport(
        method=method, rows=rows, aggregates=aggregates, failed_count=len(rows) - len(ok_rows)
    )


def write_report_csv(path: str | Path, report: MethodReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["index", "src", "ref", "gen", "ok", "l2m", "clip_i", "face_sim", "cxf", "error"])
        for r in report.rows:
            w.writerow(
                [
                    r.index,
                    r.src_path,
                    r.ref_path,
                    r.gen_path,
                    int(r.ok),
                    f"{r.l2m:.6f}",
                    f"{r.clip_i:.6f}",
                    f"{r.face_sim:.6f}",
                    f"{r.cxf:.6f}",
                    r.error,
                ]
            )


def write_report_json(path: str | Path, report: MethodReport) -> None:
    payload = {
        "method": report.method,
        "aggregates": report.aggregates,
        "row_count": len(report.rows),
        "failed_count": report.failed_count,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def scatter_svg(method_points: dict[str, tuple[float, float]], size: int = 480) -> str:
    """Scatter of min-max normalized (clip_i, face_sim) pairs across methods."""
    cs = minmax_normalize({m: p[0] for m, p in method_points.items()})
    fs = minmax_normalize({m: p[1] for m, p in method_points.items()})
    pad = 50
    span = size - 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{size - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{size - pad}" x2="{pad}" y2="{pad}" stroke="black"/>',
        f'<text x="{size // 2}" y="{size - 12}" text-anchor="middle" font-size="13">CLIP-I (normalized)</text>',
        f'<text x="14" y="{size // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {size // 2})">Face Similarity (normalized)</text>',
    ]
    for m in sorted(method_points):
        x = pad + cs[m] * span
        y = size - pad - fs[m] * span
        parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="5" fill="crimson"/>')
        parts.append(f'<text x="{x + 8:.1f}" y="{y - 6:.1f}" font-size="12">{m}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
