"""Command-line entry point.

Subcommands map 1:1 onto toolkit operations.  Conventions: exit 0 on
success, 2 on usage errors, 1 on operation errors with a structured JSON
error on stderr; every subcommand is deterministic under --seed; output
files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bench, flowlab, layers, rewards, stdmesh, verifier
from .errors import MakeupLabError
from .geom import LandmarkSet, MeshTopology, load_landmarks, load_topology
from .imgcore import ImageBuf, read_png, write_png
from .providers import HttpEmbeddingProvider, StubEmbeddingProvider

try:
    from importlib.metadata import version as _pkg_version

    VERSION = _pkg_version("makeuplab")
except Exception:  # pragma: no cover
    VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# Atomic output helpers
# ---------------------------------------------------------------------------


def _atomic(path: str | Path, write_fn) -> None:
    """Write through a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_text(path: str | Path, text: str) -> None:
    _atomic(path, lambda tmp: Path(tmp).write_text(text, encoding="utf-8"))


def _atomic_json(path: str | Path, payload) -> None:
    _atomic_text(path, json.dumps(payload, indent=2, sort_keys=True))


def _atomic_png(path: str | Path, img: ImageBuf, bit_depth: int = 8) -> None:
    _atomic(path, lambda tmp: write_png(tmp, img, bit_depth))


# ---------------------------------------------------------------------------
# Shared loading
# ---------------------------------------------------------------------------


def _resolve_topology(lms: LandmarkSet, topology_path: str | None) -> MeshTopology:
    if topology_path:
        return load_topology(topology_path)
    if lms.topology_id == stdmesh.TOPOLOGY_ID:
        return stdmesh.standard_topology()
    raise MakeupLabError(
        f"no topology file given and {lms.topology_id!r} is not the built-in topology"
    )


def _load_template(path: str | None) -> LandmarkSet:
    return load_landmarks(path) if path else stdmesh.standard_landmarks()


def _opacity_params(args: argparse.Namespace) -> verifier.OpacityParams:
    return verifier.OpacityParams(
        lambda_h=args.lambda_h,
        lambda_c=args.lambda_c,
        lambda_l=args.lambda_l,
        sigma_blur=args.sigma_blur,
        tau_smooth=args.tau_smooth,
        q_lo=args.q_lo,
        q_hi=args.q_hi,
    )


def _add_opacity_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda-h", type=float, default=4.0)
    p.add_argument("--lambda-c", type=float, default=4.0)
    p.add_argument("--lambda-l", type=float, default=4.0)
    p.add_argument("--sigma-blur", type=float, default=4.0)
    p.add_argument("--tau-smooth", type=float, default=4.0)
    p.add_argument("--q-lo", type=float, default=0.10)
    p.add_argument("--q-hi", type=float, default=0.90)


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--stub-provider", action="store_true", help="deterministic in-process stub")
    g.add_argument("--provider", metavar="URL", help="inference sidecar base URL")


def _make_provider(args: argparse.Namespace):
    if args.stub_provider:
        return StubEmbeddingProvider()
    return HttpEmbeddingProvider(args.provider)


def _load_bundle(image: str, mask_png: str, mask_labels: str, landmarks: str) -> rewards.VerifierBundle:
    return rewards.VerifierBundle(
        image=read_png(image),
        mask=verifier.load_face_mask(mask_png, mask_labels),
        landmarks=load_landmarks(landmarks),
    )


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_compose_layer(args) -> int:
    comps = layers.load_component_library(args.library)
    std_img = read_png(args.std_image)
    std_lms = load_landmarks(args.std_landmarks)
    topo = _resolve_topology(std_lms, args.topology)
    made, layer = layers.compose_standard_makeup(
        comps, std_img, std_lms, topo, seed=args.seed, layer_id=args.layer_id
    )
    _atomic_png(args.out_image, made)
    _atomic(args.out_layer, lambda tmp: layers.save_layer(tmp, layer))
    print(json.dumps({"ok": True, "layer_id": layer.layer_id, "components": len(comps)}))
    return 0


def _cmd_extract_layer(args) -> int:
    layer = layers.extract_layer(
        read_png(args.make),
        read_png(args.non),
        load_landmarks(args.landmarks),
        layer_id=args.layer_id,
    )
    _atomic(args.out, lambda tmp: layers.save_layer(tmp, layer))
    print(json.dumps({"ok": True, "layer_id": layer.layer_id}))
    return 0


def _cmd_apply_layer(args) -> int:
    layer = layers.load_layer(args.layer)
    tgt = read_png(args.image)
    lms = load_landmarks(args.landmarks)
    topo = _resolve_topology(lms, args.topology)
    out_path = args.out or str(Path(args.image).with_name(Path(args.image).stem + "_applied.png"))
    result = layers.apply_layer(layer, tgt, lms, topo)
    _atomic_png(out_path, result)
    print(json.dumps({"ok": True, "out": out_path}))
    return 0


def _cmd_make_triplets(args) -> int:
    applied = []
    for line in Path(args.applied).read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            applied.append((row["identity_id"], row["layer_id"], row["src_path"], row["tgt_path"]))
    triplets = layers.build_triplets(applied, seed=args.seed)
    _atomic(args.out, lambda tmp: layers.save_triplet_manifest(tmp, triplets))
    print(json.dumps({"ok": True, "triplets": len(triplets)}))
    return 0


def _cmd_verify(args) -> int:
    img = read_png(args.image)
    mask = verifier.load_face_mask(args.mask, args.labels)
    lms = load_landmarks(args.landmarks)
    topo = _resolve_topology(lms, args.topology)
    template = _load_template(args.template)
    layer = verifier.makeup_exclusive_layer(img, mask, lms, template, topo, _opacity_params(args))
    _atomic_png(args.out_layer, layer.rgba)
    meta = {
        "baseline": {
            "h_bar": layer.baseline.h_bar,
            "c_bar": layer.baseline.c_bar,
            "l_bar": layer.baseline.l_bar,
            "pixel_count": layer.baseline.pixel_count,
        },
        "params": {
            "lambda_h": layer.params.lambda_h,
            "lambda_c": layer.params.lambda_c,
            "lambda_l": layer.params.lambda_l,
            "sigma_blur": layer.params.sigma_blur,
            "tau_smooth": layer.params.tau_smooth,
            "q_lo": layer.params.q_lo,
            "q_hi": layer.params.q_hi,
        },
    }
    _atomic_json(args.out_meta, meta)
    print(json.dumps({"ok": True, "skin_pixels": layer.baseline.pixel_count}))
    return 0


def _cmd_reward(args) -> int:
    provider = _make_provider(args)
    r = rewards.makeup_reward(
        _load_bundle(args.ref_image, args.ref_mask, args.ref_labels, args.ref_landmarks),
        _load_bundle(args.gen_image, args.gen_mask, args.gen_labels, args.gen_landmarks),
        _opacity_params(args),
        provider,
    )
    payload = {"r_makeup": r}
    if args.out:
        _atomic_json(args.out, payload)
    print(json.dumps(payload))
    return 0


def _fmt_number(x: float) -> str:
    v = round(float(x), 4)
    if v == 0:
        return "0"
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return s


def _cmd_advantages(args) -> int:
    values = [float(v) for v in args.rewards.split(",") if v.strip() != ""]
    adv = rewards.grpo_advantages(values)
    print(",".join(_fmt_number(a) for a in adv))
    return 0


def _cmd_pairs(args) -> int:
    manifest = bench.load_manifest(args.manifest)
    pairs = bench.make_pairs(manifest, n=args.n, seed=args.seed)
    payload = {
        "seed": args.seed,
        "rows": [{"src": s.path, "ref": r.path} for s, r in pairs],
    }
    _atomic_json(args.out, payload)
    print(json.dumps({"ok": True, "pairs": len(pairs)}))
    return 0


def _cmd_bench_stats(args) -> int:
    stats = bench.bench_stats(bench.load_manifest(args.manifest))
    text = json.dumps(stats, indent=2, sort_keys=True)
    if args.out:
        _atomic_text(args.out, text)
    print(text)
    return 0


def _cmd_evaluate(args) -> int:
    spec_rows = json.loads(Path(args.rows).read_text(encoding="utf-8"))["rows"]
    pairs = [(r["src"], r["ref"]) for r in spec_rows]
    generated = [r["gen"] for r in spec_rows]
    masks = []
    for r in spec_rows:
        try:
            masks.append(verifier.load_face_mask(r["mask_png"], r["mask_labels"]))
        except (FileNotFoundError, KeyError):
            masks.append(None)

    provider = _make_provider(args)
    cache: dict[tuple[str, str], object] = {}

    def embed(path: str, tag: str):
        key = (path, tag)
        if key not in cache:
            cache[key] = provider.embed_image(read_png(path), tag)
        return cache[key]

    if args.jobs > 1:
        # warm the cache in parallel; row assembly stays ordered
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            tasks = set()
            for (src, ref), gen in zip(pairs, generated):
                tasks.update({(gen, bench.IMAGE_TAG), (ref, bench.IMAGE_TAG),
                              (gen, bench.FACE_TAG), (src, bench.FACE_TAG)})
            existing = [t for t in sorted(tasks) if Path(t[0]).exists()]
            results = list(pool.map(lambda t: (t, provider.embed_image(read_png(t[0]), t[1])), existing))
            cache.update(dict(results))

    report = bench.evaluate_run(args.method, pairs, generated, masks, embed)
    out_dir = Path(args.out_dir)
    _atomic(out_dir / "report.csv", lambda tmp: bench.write_report_csv(tmp, report))
    _atomic(out_dir / "summary.json", lambda tmp: bench.write_report_json(tmp, report))

    if args.scatter:
        points = {report.method: (report.aggregates.get("clip_i", 0.0), report.aggregates.get("face_sim", 0.0))}
        for other in args.compare or []:
            o = json.loads(Path(other).read_text(encoding="utf-8"))
            points[o["method"]] = (o["aggregates"]["clip_i"], o["aggregates"]["face_sim"])
        _atomic_text(args.scatter, bench.scatter_svg(points))

    print(json.dumps({"ok": True, "aggregates": report.aggregates, "failed": report.failed_count}))
    return 0


def _cmd_flow_demo(args) -> int:
    header = {
        "mode": args.mode,
        "seed": args.seed,
        "steps": args.steps,
        "schedule": args.schedule,
        "scale": args.scale,
        "guidance_scale": flowlab.DEFAULT_GUIDANCE_SCALE,
    }
    lines = [f"# config {json.dumps(header, sort_keys=True)}"]
    rng = np.random.default_rng(args.seed)
    if args.mode in ("ode", "sde"):
        c = np.array([float(v) for v in args.target.split(",")])
        fld = flowlab.dirac_velocity(c)
        schedule = flowlab.SCHEDULES[args.schedule](args.scale)
        lines.append("sample," + ",".join(f"z{i}" for i in range(c.size)))
        for i in range(args.samples):
            z1 = rng.standard_normal(c.size)
            if args.mode == "ode":
                z = flowlab.sample_ode(fld, z1, steps=args.steps)
            else:
                z = flowlab.sample_sde(fld, z1, steps=args.steps, schedule=schedule, seed=args.seed + i)
            lines.append(f"{i}," + ",".join(f"{v:.8f}" for v in z))
    else:  # fit
        data = rng.standard_normal(args.samples)
        fitted = flowlab.fit_field(
            data, t_bins=args.bins, iters=args.iters, lr=args.lr, seed=args.seed
        )
        lines.append("iter,loss")
        for i, loss in enumerate(fitted.loss_curve):
            lines.append(f"{i},{loss:.8f}")
        lines.append("bin,center,a,b")
        for k in range(fitted.bins):
            center = (k + 0.5) / fitted.bins
            lines.append(f"{k},{center:.4f},{fitted.a[k, 0]:.6f},{fitted.b[k, 0]:.6f}")
    _atomic_text(args.out_csv, "\n".join(lines) + "\n")
    print(json.dumps({"ok": True, "out": args.out_csv}))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="makeuplab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"makeuplab {VERSION}")
    parser.add_argument("--config", help="key = value config file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose-layer", help="composite components on the standard face")
    p.add_argument("--library", required=True)
    p.add_argument("--std-image", required=True)
    p.add_argument("--std-landmarks", required=True)
    p.add_argument("--topology")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layer-id")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-layer", required=True)
    p.set_defaults(fn=_cmd_compose_layer)

    p = sub.add_parser("extract-layer", help="residual layer from a made-up/bare pair")
    p.add_argument("--make", required=True)
    p.add_argument("--non", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--layer-id", default="extracted")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_extract_layer)

    p = sub.add_parser("apply-layer", help="warp a layer onto a portrait")
    p.add_argument("--layer", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--topology")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_apply_layer)

    p = sub.add_parser("make-triplets", help="pair identities sharing layers into triplets")
    p.add_argument("--applied", required=True, help="JSONL of identity/layer/src/tgt rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_make_triplets)

    p = sub.add_parser("verify", help="extract the makeup-exclusive layer")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="label-map PNG")
    p.add_argument("--labels", required=True, help="JSON with face_label_set")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--topology")
    p.add_argument("--template")
    _add_opacity_flags(p)
    p.add_argument("--out-layer", required=True)
    p.add_argument("--out-meta", required=True)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("reward", help="makeup fidelity reward between two portraits")
    for side in ("ref", "gen"):
        p.add_argument(f"--{side}-image", required=True)
        p.add_argument(f"--{side}-mask", required=True)
        p.add_argument(f"--{side}-labels", required=True)
        p.add_argument(f"--{side}-landmarks", required=True)
    _add_opacity_flags(p)
    _add_provider_flags(p)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_reward)

    p = sub.add_parser("advantages", help="group-standardized advantages")
    p.add_argument("--rewards", required=True, help="comma-separated rewards")
    p.set_defaults(fn=_cmd_advantages)

    p = sub.add_parser("pairs", help="seeded source/reference pairing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_pairs)

    p = sub.add_parser("bench-stats", help="manifest composition statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_bench_stats)

    p = sub.add_parser("evaluate", help="score a method's generated images")
    p.add_argument("--rows", required=True, help="JSON rows with src/ref/gen/mask paths")
    p.add_argument("--method", default="method")
    _add_provider_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--scatter", help="write a normalized clip_i/face_sim scatter SVG")
    p.add_argument("--compare", action="append", help="other summary.json for the scatter")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("flow-demo", help="flow sampling and fitting demos")
    p.add_argument("--mode", choices=["ode", "sde", "fit"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=flowlab.DEFAULT_ODE_STEPS)
    p.add_argument("--schedule", choices=sorted(flowlab.SCHEDULES), default="sqrt_ratio")
    p.add_argument("--scale", type=float, default=0.3)
    p.add_argument("--target", default="1.5,-0.5", help="point-mass data location")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(fn=_cmd_flow_demo)

    return parser


def _load_config(path: str) -> dict:
    values: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MakeupLabError(f"bad config line: {line!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip().strip('"')
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict) -> None:
    """Install config values as defaults, including inside subparsers.

    A flag backed by the config is no longer required on the command line;
    explicit flags still win because defaults lose to parsed values.
    """
    parser.set_defaults(**values)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _apply_config(sub, values)
        elif action.dest in values:
            action.required = False


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        raw = _load_config(cfg_path)
        typed: dict[str, object] = {}
        for k, v in raw.items():
            try:
                typed[k] = json.loads(v)
            except json.JSONDecodeError:
                typed[k] = v
        _apply_config(parser, typed)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MakeupLabError as exc:
        print(json.dumps({"error": {"code": exc.code, "message": str(exc)}}), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(
            json.dumps({"error": {"code": "internal", "message": f"{type(exc).__name__}: {exc}"}}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
