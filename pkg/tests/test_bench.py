import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from makeuplab.bench import (
    FACE_TAG,
    IMAGE_TAG,
    BenchManifest,
    ReferenceEntry,
    SourceEntry,
    bench_stats,
    cxf,
    entropy_bits,
    evaluate_run,
    l2m,
    load_manifest,
    make_pairs,
    minmax_normalize,
    save_manifest,
    scatter_svg,
    write_report_csv,
    write_report_json,
)
from makeuplab.errors import ShapeMismatchError
from makeuplab.imgcore import ImageBuf, Space, new_image, write_png
from makeuplab.providers import Embedding
from makeuplab.verifier import FaceRegionMask

TONES = ("light", "medium", "dark")
GENDERS = ("female", "male")
POSES = ("frontal", "profile")
STYLES = ("light", "heavy", "complex")


def _manifest(n_src_per_group=50, ref_counts=(176, 164, 172)):
    sources = []
    for tone in TONES:
        for gender in GENDERS:
            for i in range(n_src_per_group):
                pose = "frontal" if i % 10 < 7 else "profile"  # 70/30 split
                sources.append(
                    SourceEntry(
                        path=f"src/{tone}_{gender}_{i}.png",
                        skin_tone_label=tone,
                        gender_label=gender,
                        pose_label=pose,
                    )
                )
    references = []
    for style, count in zip(STYLES, ref_counts):
        for i in range(count):
            references.append(ReferenceEntry(path=f"ref/{style}_{i}.png", style_label=style))
    return BenchManifest(
        sources=tuple(sources),
        references=tuple(references),
        skin_tone_vocab=TONES,
        gender_vocab=GENDERS,
        pose_vocab=POSES,
        style_vocab=STYLES,
    )


def _labels_mask(h, w, facial_rows):
    lbl = np.zeros((h, w, 1))
    lbl[:facial_rows] = 1
    return FaceRegionMask(labels=ImageBuf(lbl, Space.ALPHA), face_label_set=frozenset({1}))


class TestMakePairs:
    def test_zero_pairs(self):
        assert make_pairs(_manifest(2, (2, 2, 2)), n=0, seed=0) == []

    def test_seed_determinism(self):
        m = _manifest(2, (2, 2, 2))
        assert make_pairs(m, 50, seed=3) == make_pairs(m, 50, seed=3)

    def test_source_marginal_uniform(self):
        m = _manifest(50, (176, 164, 172))  # 300 sources x 512 references
        pairs = make_pairs(m, 1000, seed=7)
        assert len(pairs) == 1000
        counts = {}
        for s, _ in pairs:
            counts[s.path] = counts.get(s.path, 0) + 1
        observed = [counts.get(s.path, 0) for s in m.sources]
        _, p = chisquare(observed)
        assert p > 0.01

    def test_empty_side_rejected(self):
        m = _manifest(1, (1, 1, 1))
        empty = BenchManifest(
            sources=(),
            references=m.references,
            skin_tone_vocab=TONES,
            gender_vocab=GENDERS,
            pose_vocab=POSES,
            style_vocab=STYLES,
        )
        with pytest.raises(ValueError):
            make_pairs(empty, 5, seed=0)


class TestL2m:
    def test_identical_zero(self):
        img = new_image(8, 8, 3, Space.SRGB, fill=0.4)
        assert l2m(img, img, _labels_mask(8, 8, 4)) == 0.0

    def test_black_vs_white_sqrt_three(self):
        black = new_image(8, 8, 3, Space.SRGB, fill=0.0)
        white = new_image(8, 8, 3, Space.SRGB, fill=1.0)
        mask = _labels_mask(8, 8, 0)  # everything non-facial
        assert abs(l2m(white, black, mask) - math.sqrt(3)) < 1e-12

    def test_half_differ_by_tenth(self):
        src = new_image(8, 8, 3, Space.SRGB, fill=0.4)
        gen = src.copy()
        gen.data[4:, :, 0] += 0.1  # half the non-facial pixels differ by (0.1, 0, 0)
        mask = _labels_mask(8, 8, 0)
        assert abs(l2m(gen, src, mask) - 0.05) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = ImageBuf(rng.uniform(size=(6, 6, 3)), Space.SRGB)
        b = ImageBuf(rng.uniform(size=(6, 6, 3)), Space.SRGB)
        mask = _labels_mask(6, 6, 2)
        assert l2m(a, b, mask) == l2m(b, a, mask)

    def test_facial_pixels_ignored(self):
        src = new_image(8, 8, 3, Space.SRGB, fill=0.4)
        gen = src.copy()
        gen.data[:4] = 0.9  # facial rows only
        assert l2m(gen, src, _labels_mask(8, 8, 4)) == 0.0

    def test_all_facial_rejected(self):
        img = new_image(4, 4, 3, Space.SRGB)
        with pytest.raises(ValueError):
            l2m(img, img, _labels_mask(4, 4, 4))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            l2m(new_image(4, 4, 3, Space.SRGB), new_image(5, 5, 3, Space.SRGB), _labels_mask(4, 4, 2))


class TestCxf:
    def test_reported_joint_scores(self):
        assert abs(cxf(0.644, 0.901) - 0.580) < 0.001
        assert abs(cxf(0.541, 0.869) - 0.470) < 0.001

    def test_zero_factor(self):
        assert cxf(0.9, 0.0) == 0.0


class TestMinmax:
    def test_endpoints_and_midpoint(self):
        out = minmax_normalize({"a": 0.2, "b": 0.5, "c": 0.8})
        assert out["a"] == 0.0 and out["c"] == 1.0
        assert out["b"] == pytest.approx(0.5)

    def test_degenerate_all_zero(self):
        out = minmax_normalize({"a": 0.7, "b": 0.7})
        assert out == {"a": 0.0, "b": 0.0}

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=10, unique=True))
    def test_rank_preserved(self, values):
        scores = {f"m{i}": v for i, v in enumerate(values)}
        out = minmax_normalize(scores)
        order_in = sorted(scores, key=scores.get)
        order_out = sorted(out, key=out.get)
        assert order_in == order_out


class TestEntropy:
    def test_uniform_four_way(self):
        assert abs(entropy_bits([25, 25, 25, 25]) - 2.0) < 1e-12

    def test_single_category(self):
        assert entropy_bits([42]) == 0.0

    def test_hand_computed(self):
        # independent oracle: direct formula evaluation
        counts = [150, 75, 50, 25]
        total = sum(counts)
        expected = -sum((c / total) * math.log2(c / total) for c in counts)
        assert abs(entropy_bits(counts) - expected) < 1e-12
        assert abs(entropy_bits(counts) - 1.7295) < 1e-3

    def test_max_iff_uniform(self):
        assert entropy_bits([10, 10, 10]) == pytest.approx(math.log2(3))
        assert entropy_bits([20, 5, 5]) < math.log2(3)

    def test_permutation_invariant(self):
        assert entropy_bits([1, 2, 3]) == pytest.approx(entropy_bits([3, 1, 2]), abs=1e-12)

    def test_zero_counts_ignored(self):
        assert entropy_bits([5, 0, 5]) == pytest.approx(1.0)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            entropy_bits([0, 0])


class TestBenchStats:
    def test_balanced_manifest_statistics(self):
        stats = bench_stats(_manifest())
        assert stats["source_count"] == 300
        assert stats["reference_count"] == 512
        assert stats["gender_percent"] == {"female": 50.0, "male": 50.0}
        assert abs(stats["style_percent"]["complex"] - 33.6) < 0.05
        # three uniform tone groups of 100
        assert abs(stats["skin_tone_entropy_bits"] - math.log2(3)) < 1e-9


class TestEvaluateRun:
    def _write_images(self, tmp_path, n=4):
        rng = np.random.default_rng(1)
        paths = []
        for i in range(n):
            img = ImageBuf(np.round(rng.uniform(size=(8, 8, 3)) * 255) / 255, Space.SRGB)
            p = tmp_path / f"img_{i}.png"
            write_png(p, img)
            paths.append(str(p))
        return paths

    def test_identity_method(self, tmp_path):
        from makeuplab.providers import StubEmbeddingProvider
        from makeuplab.imgcore import read_png

        paths = self._write_images(tmp_path, 3)
        stub = StubEmbeddingProvider()

        def embed(path, tag):
            return stub.embed_image(read_png(path), tag)

        pairs = [(paths[i], paths[(i + 1) % 3]) for i in range(3)]
        generated = [p for p, _ in pairs]  # gen = src
        masks = [_labels_mask(8, 8, 4)] * 3
        report = evaluate_run("identity", pairs, generated, masks, embed)
        assert report.failed_count == 0
        for row in report.rows:
            assert row.face_sim == 1.0
            assert row.l2m == 0.0
            assert abs(row.cxf - row.clip_i * row.face_sim) < 1e-9

    def test_reported_aggregate_fixture(self, tmp_path):
        # preset embeddings chosen to land on the published aggregate row
        paths = self._write_images(tmp_path, 9)
        pairs = [(paths[0], paths[1]), (paths[2], paths[3]), (paths[4], paths[5])]
        generated = paths[6:9]
        masks = [_labels_mask(8, 8, 4)] * 3

        c, f = 0.644, 0.901
        e1 = np.array([1.0, 0.0])

        def embed(path, tag):
            is_gen = path in generated
            if tag == IMAGE_TAG:
                v = np.array([c, math.sqrt(1 - c * c)]) if is_gen else e1
            else:
                v = np.array([f, math.sqrt(1 - f * f)]) if is_gen else e1
            return Embedding(vector=v, model_tag=tag)

        report = evaluate_run("ours", pairs, generated, masks, embed)
        assert abs(report.aggregates["clip_i"] - 0.644) < 1e-9
        assert abs(report.aggregates["face_sim"] - 0.901) < 1e-9
        assert abs(report.aggregates["cxf"] - 0.580) < 0.001

    def test_missing_artifact_flagged_not_zero_filled(self, tmp_path):
        from makeuplab.providers import StubEmbeddingProvider
        from makeuplab.imgcore import read_png

        paths = self._write_images(tmp_path, 2)
        stub = StubEmbeddingProvider()

        def embed(path, tag):
            return stub.embed_image(read_png(path), tag)

        pairs = [(paths[0], paths[1]), (paths[0], paths[1])]
        generated = [paths[0], str(tmp_path / "missing.png")]
        masks = [_labels_mask(8, 8, 4), _labels_mask(8, 8, 4)]
        report = evaluate_run("m", pairs, generated, masks, embed)
        assert report.failed_count == 1
        assert not report.rows[1].ok
        assert report.rows[1].error
        # aggregates come from the single ok row
        assert report.aggregates["l2m"] == report.rows[0].l2m

    def test_aggregates_equal_row_means(self, tmp_path):
        from makeuplab.providers import StubEmbeddingProvider
        from makeuplab.imgcore import read_png

        paths = self._write_images(tmp_path, 6)
        stub = StubEmbeddingProvider()

        def embed(path, tag):
            return stub.embed_image(read_png(path), tag)

        pairs = [(paths[i], paths[i + 1]) for i in range(0, 6, 2)]
        generated = [paths[i + 1] for i in range(0, 6, 2)]
        masks = [_labels_mask(8, 8, 4)] * 3
        report = evaluate_run("m", pairs, generated, masks, embed)
        for key in ("l2m", "clip_i", "face_sim", "cxf"):
            vals = [getattr(r, key) for r in report.rows if r.ok]
            assert abs(report.aggregates[key] - np.mean(vals)) < 1e-9

    def test_report_files(self, tmp_path):
        from makeuplab.providers import StubEmbeddingProvider
        from makeuplab.imgcore import read_png

        paths = self._write_images(tmp_path, 2)
        stub = StubEmbeddingProvider()
        report = evaluate_run(
            "m",
            [(paths[0], paths[1])],
            [paths[0]],
            [_labels_mask(8, 8, 4)],
            lambda p, t: stub.embed_image(read_png(p), t),
        )
        write_report_csv(tmp_path / "r.csv", report)
        write_report_json(tmp_path / "r.json", report)
        header = (tmp_path / "r.csv").read_text().splitlines()[0]
        assert header == "index,src,ref,gen,ok,l2m,clip_i,face_sim,cxf,error"
        assert '"method": "m"' in (tmp_path / "r.json").read_text()


class TestManifestIo:
    def test_round_trip(self, tmp_path):
        m = _manifest(2, (2, 2, 2))
        save_manifest(tmp_path / "m.json", m)
        back = load_manifest(tmp_path / "m.json")
        assert back == m

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            BenchManifest(
                sources=(SourceEntry("a.png", "neon", "female", "frontal"),),
                references=(),
                skin_tone_vocab=TONES,
                gender_vocab=GENDERS,
                pose_vocab=POSES,
                style_vocab=STYLES,
            )

    def test_duplicate_paths_rejected(self):
        with pytest.raises(ValueError):
            BenchManifest(
                sources=(
                    SourceEntry("a.png", "light", "female", "frontal"),
                    SourceEntry("a.png", "light", "male", "frontal"),
                ),
                references=(),
                skin_tone_vocab=TONES,
                gender_vocab=GENDERS,
                pose_vocab=POSES,
                style_vocab=STYLES,
            )


class TestScatterSvg:
    def test_contains_methods_and_normalized_layout(self):
        svg = scatter_svg({"ours": (0.644, 0.901), "other": (0.5, 0.3), "mid": (0.57, 0.6)})
        assert svg.startswith("<svg")
        for name in ("ours", "other", "mid"):
            assert name in svg
        assert svg.count("<circle") == 3
