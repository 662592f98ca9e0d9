"""``dyncog`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
Every run writes ``config.json`` (the resolved arguments) next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, DyncogError, LayoutMismatch, MalformedGeneration, TransportError
from .filtering.features import DEFAULT_LAYOUT, FULL_LAYOUT, assemble_features, motion_features
from .filtering.forest import DEFAULT_DEPTH, DEFAULT_TREES, ForestModel, train_forest
from .filtering.gate import GateThresholds
from .fusion import FusionMode, compose_sequence, write_sequence
from .gateway.generate import JsonlWriter, answer_vqa, generate_qa
from .gateway.prompts import TemplateKind, load_template
from .gateway.transport import DEFAULT_KEY_ENV, ModelEndpoint
from .kinematics import DEFAULT_ALPHA, build_tracks
from .metrics import (
    accuracy, build_report, chance_frequency, chance_random, load_grounding, load_qa, read_jsonl,
    score_grounding,
)
from .pipeline import (
    derive_seed, filter_video, read_feature_table, tcm_document, write_feature_table,
)
from .relations import DEFAULT_EPS_REL, DEFAULT_MIN_RUN, infer_timeline
from .scene import load_manifest, masklet_from_dict
from .synthetic import planted_clip, write_clip_manifest, write_scripted_scene
from .tcm import TcmConfig

logger = logging.getLogger("dyncog")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3
LAYOUTS = {"default": DEFAULT_LAYOUT, "full": FULL_LAYOUT}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _endpoint_args(p):
    g = p.add_argument_group("model endpoint")
    g.add_argument("--transport", choices=["mock", "http"], default=None,
                   help="model transport; omit to run without a model")
    g.add_argument("--fixture", help="canned replies for the mock transport (JSON)")
    g.add_argument("--base-url", default="", help="chat-completion base URL for the http transport")
    g.add_argument("--model", default="", help="model name sent with each request")
    g.add_argument("--credentials-env", default=DEFAULT_KEY_ENV,
                   help="environment variable holding the bearer token")
    g.add_argument("--timeout", type=float, default=60.0, help="request timeout in seconds")
    g.add_argument("--retries", type=int, default=2, help="extra attempts after a rejected generation")
    g.add_argument("--max-in-flight", type=int, default=4, help="concurrent requests across videos")


def _geometry_args(p):
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="EMA smoothing factor for positions")
    p.add_argument("--eps-rel", type=float, default=DEFAULT_EPS_REL,
                   help="closing-speed band (m/s) for the parallel relation")
    p.add_argument("--min-run", type=int, default=DEFAULT_MIN_RUN, help="debounce: shortest kept label run (frames)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="dyncog", description="Cognitive maps and dynamic-scene benchmark tooling.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("--seed", type=int, default=0, help="top-level seed; sub-seeds are derived from it")
    parser.add_argument("--workers", type=int, default=1, help="videos processed in parallel")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("filter", help="score videos by dynamism and gate them", formatter_class=fmt)
    p.add_argument("inputs", nargs="+", help="manifest files or directories containing manifest.json files")
    p.add_argument("--out", required=True, help="output directory")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model-path", help="trained forest (text format)")
    src.add_argument("--train", help="feature table CSV with a label column; a forest is trained on it")
    p.add_argument("--layout", choices=sorted(LAYOUTS), default="default",
                   help="feature groups: default = motion + diagnostic (31), full adds geometric + coverage (38)")
    p.add_argument("--trees", type=int, default=DEFAULT_TREES, help="forest size when training")
    p.add_argument("--max-depth", type=int, default=DEFAULT_DEPTH, help="tree depth when training")
    p.add_argument("--theta", type=float, default=3.0, help="minimum dynamism score to accept")
    p.add_argument("--max-focal-instability", type=float, default=0.02, help="gate on relative std of fx")
    p.add_argument("--max-rotation-step", type=float, default=15.0, help="gate on per-frame camera rotation (deg)")
    _endpoint_args(p)

    p = sub.add_parser("tcm", help="render a textual cognitive map", formatter_class=fmt)
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output file for the document")
    p.add_argument("--T", dest="T", action="store_true", help="include temporal lines")
    p.add_argument("--M", dest="M", action="store_true", help="include motion lines")
    p.add_argument("--S", dest="S", action="store_true", help="include spatial lines")
    p.add_argument("--rounding", type=int, default=2, help="decimal places for meters and m/s")
    p.add_argument("--export", help="directory for tracks.json and relations.json")
    _geometry_args(p)

    p = sub.add_parser("fuse", help="compose raw / overlay / fused frame sequences", formatter_class=fmt)
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output directory for images and index.json")
    p.add_argument("--mode", choices=["raw", "masked_only", "fusion"], default="fusion")
    p.add_argument("--overlay-alpha", type=float, default=0.5)
    p.add_argument("--layout", choices=["interleave", "tile"], default="interleave",
                   help="fusion layout: alternating frames or side-by-side tiles")

    p = sub.add_parser("qa-gen", help="generate QA and grounding items through a model", formatter_class=fmt)
    p.add_argument("manifest")
    p.add_argument("--tcm", required=True, help="cognitive map document")
    p.add_argument("--kind", action="append", choices=[k.value for k in TemplateKind] + ["all"],
                   help="template kind (repeatable); default all six")
    p.add_argument("--templates", help="directory overriding the packaged template assets")
    p.add_argument("--out", required=True, help="output directory (qa.jsonl, grounding.jsonl, rejected.jsonl)")
    _endpoint_args(p)

    p = sub.add_parser("answer", help="collect model answers for QA items", formatter_class=fmt)
    p.add_argument("qa", help="QA file (JSONL)")
    p.add_argument("--manifest", required=True, help="manifest whose frames are shown to the model")
    p.add_argument("--mode", choices=["raw", "masked_only", "fusion"], default="raw",
                   help="visual input strategy (frames are referenced by path)")
    p.add_argument("--out", required=True, help="predictions file (JSONL)")
    _endpoint_args(p)

    p = sub.add_parser("eval", help="score predictions", formatter_class=fmt)
    p.add_argument("--qa", help="QA file (JSONL)")
    p.add_argument("--predictions", help="JSONL of {qa_id, label | reply}")
    p.add_argument("--grounding", help="grounding file (JSONL)")
    p.add_argument("--grounding-predictions", help="JSONL of {item_id, masklet}")
    p.add_argument("--tolerance", type=float, default=None,
                   help="boundary tolerance in px (default: ceil(0.8%% of the image diagonal))")
    p.add_argument("--out", required=True, help="output directory (report.txt, report.json)")

    p = sub.add_parser("synth", help="write synthetic fixtures", formatter_class=fmt)
    p.add_argument("what", choices=["scripted", "planted"])
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=30, help="scripted: number of frames")
    p.add_argument("--yaw-rate", type=float, default=0.0, help="scripted: camera pan in deg/s")
    p.add_argument("--depth-noise", type=float, default=0.0, help="scripted: uniform depth noise (m)")
    p.add_argument("--depth-encoding", choices=["png16", "float32"], default="png16")
    p.add_argument("--count", type=int, default=60, help="planted: number of clips (levels cycle 0..5)")
    p.add_argument("--write-clips", action="store_true", help="planted: also write each clip as a manifest")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _echo_config(out_dir: Path, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = {k: v for k, v in sorted(vars(args).items())}
    (out_dir / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True, default=str) + "\n")


def _endpoint(args) -> ModelEndpoint | None:
    if args.transport is None:
        return None
    return ModelEndpoint(args.base_url, args.model, args.credentials_env, args.timeout, args.transport,
                         args.fixture, args.retries, args.max_in_flight)


def _manifest_paths(inputs) -> list[Path]:
    out = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            out.extend(sorted(p.rglob("manifest.json")))
        else:
            out.append(p)
    if not out:
        raise UsageError("no manifests found in the inputs")
    return out


def _mode(name: str, alpha: float = 0.5, layout: str = "interleave") -> FusionMode:
    return FusionMode(name, alpha, None, layout)


# ---------------------------------------------------------------------------
# subcommands


def cmd_filter(args) -> int:
    out = Path(args.out)
    layout = LAYOUTS[args.layout]
    if args.model_path:
        model = ForestModel.load(args.model_path)
    elif args.train:
        _, names, X, y = read_feature_table(args.train)
        if y is None:
            raise UsageError("training table has no label column")
        model = train_forest(X=X, y=y, trees=args.trees, max_depth=args.max_depth,
                             seed=derive_seed(args.seed, "forest"))
    else:
        raise UsageError("filter needs --model-path or --train")
    _echo_config(out, args)
    if args.train:
        model.save(out / "model.txt")
    if model.n_features != len(layout):
        raise LayoutMismatch(f"layout '{args.layout}' has {len(layout)} features, model expects {model.n_features}")

    endpoint = _endpoint(args)
    transport = endpoint.connect() if endpoint else None
    thresholds = GateThresholds(args.theta, args.max_focal_instability, args.max_rotation_step)
    paths = _manifest_paths(args.inputs)

    def work(path):
        return filter_video(load_manifest(path), model, layout, thresholds, endpoint, transport)

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        records = sorted(pool.map(work, paths), key=lambda r: r.video_id)
    write_feature_table(out / "features.csv", layout, [(r.video_id, r.vector) for r in records])
    with open(out / "decisions.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps({"video_id": r.video_id, **r.decision.to_dict()}, sort_keys=True) + "\n")
    for r in records:
        verdict = "accept" if r.decision.accept else "reject (" + ", ".join(r.decision.reasons) + ")"
        print(f"{r.video_id}\t{r.score:.2f}\t{verdict}")
    return EXIT_OK


def cmd_tcm(args) -> int:
    out = Path(args.out)
    _echo_config(out.parent, args)
    manifest = load_manifest(args.manifest)
    config = TcmConfig(args.T, args.M, args.S, rounding=args.rounding)
    doc = tcm_document(manifest, config, args.alpha, args.eps_rel, args.min_run)
    out.write_text(doc)
    if args.export:
        exp = Path(args.export)
        exp.mkdir(parents=True, exist_ok=True)
        tracks = build_tracks(manifest, args.alpha)
        timeline = infer_timeline(tracks, args.eps_rel, args.min_run)
        (exp / "tracks.json").write_text(json.dumps([t.to_record() for t in tracks], indent=1) + "\n")
        (exp / "relations.json").write_text(json.dumps(timeline.to_records(tracks.fps), indent=1) + "\n")
    logger.info("wrote %s (%d lines)", out, doc.count("\n"))
    return EXIT_OK


def cmd_fuse(args) -> int:
    out = Path(args.out)
    _echo_config(out, args)
    items = compose_sequence(load_manifest(args.manifest), _mode(args.mode, args.overlay_alpha, args.layout))
    write_sequence(items, out)
    print(f"{len(items)} images -> {out}")
    return EXIT_OK


def cmd_qa_gen(args) -> int:
    endpoint = _endpoint(args)
    if endpoint is None:
        raise UsageError("qa-gen needs --transport")
    out = Path(args.out)
    _echo_config(out, args)
    manifest = load_manifest(args.manifest)
    tcm = Path(args.tcm).read_text()
    kinds = args.kind or ["all"]
    kinds = [k.value for k in TemplateKind] if "all" in kinds else list(dict.fromkeys(kinds))
    transport = endpoint.connect()
    n = len(manifest)
    idx = np.unique(np.linspace(0, n - 1, min(n, 8)).round().astype(int))
    refs = [str(manifest.frames[i].rgb_ref) for i in idx]

    # kinds run in order so canned replies are consumed deterministically
    results = []
    failures = []
    for kind in kinds:
        try:
            results.append(generate_qa(endpoint, manifest, tcm, load_template(kind, args.templates), refs, transport))
        except MalformedGeneration as exc:
            failures.append({"kind": kind, "raw": exc.raw_replies, "reasons": exc.reasons})
    with JsonlWriter(out / "qa.jsonl") as qa_w, JsonlWriter(out / "grounding.jsonl") as gr_w, \
            JsonlWriter(out / "rejected.jsonl") as rej_w:
        for res in results:
            for it in res.qa:
                qa_w.write(it.to_dict())
            for it in res.grounding:
                gr_w.write(it.to_dict())
            for rej in res.rejected:
                rej_w.write({"video_id": res.video_id, "kind": res.kind, **rej})
        for f in failures:
            rej_w.write({"video_id": manifest.video_id, "final": True, **f})
    n_qa = sum(len(r.qa) for r in results)
    n_gr = sum(len(r.grounding) for r in results)
    print(f"{n_qa} QA items, {n_gr} grounding items, {len(failures)} failed kinds")
    if failures:
        logger.error("generation failed for: %s", ", ".join(f["kind"] for f in failures))
        return EXIT_DATA
    return EXIT_OK


def cmd_answer(args) -> int:
    endpoint = _endpoint(args)
    if endpoint is None:
        raise UsageError("answer needs --transport")
    items = load_qa(args.qa)
    manifest = load_manifest(args.manifest)
    transport = endpoint.connect()
    out = Path(args.out)
    _echo_config(out.parent, args)
    seq = compose_sequence(manifest, _mode(args.mode)) if args.mode != "raw" else None
    if seq is not None:
        img_dir = out.parent / f"{out.stem}_frames"
        write_sequence(seq, img_dir)
        refs = [str(img_dir / f"{it.index:06d}.png") for it in seq]
    else:
        refs = [str(f.rgb_ref) for f in manifest.frames]
    with JsonlWriter(out) as w:
        for it in items:
            w.write({"qa_id": it.qa_id, "reply": answer_vqa(endpoint, refs, it, transport)})
    print(f"{len(items)} answers -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not (args.qa or args.grounding):
        raise UsageError("eval needs --qa and/or --grounding")
    out = Path(args.out)
    _echo_config(out, args)
    qa_res = None
    extra = {}
    if args.qa:
        items = load_qa(args.qa)
        preds = {}
        if args.predictions:
            for rec in read_jsonl(args.predictions):
                preds[str(rec["qa_id"])] = rec.get("label", rec.get("reply"))
        qa_res = accuracy(preds, items)
        extra["chance"] = {"random": chance_random(items), "frequency": chance_frequency(items)}
    gr = None
    if args.grounding:
        gitems = load_grounding(args.grounding)
        gpreds = {}
        if args.grounding_predictions:
            for rec in read_jsonl(args.grounding_predictions):
                gpreds[str(rec["item_id"])] = masklet_from_dict(rec["masklet"]) if rec.get("masklet") else None
        gr = score_grounding(gitems, gpreds, args.tolerance)
    report = build_report(qa_res, gr)
    doc = {**report.to_dict(), **extra}
    (out / "report.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    text = report.to_text()
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.what == "scripted":
        path = write_scripted_scene(out, n_frames=args.frames, yaw_rate_deg=args.yaw_rate,
                                    depth_encoding=args.depth_encoding, depth_noise_m=args.depth_noise,
                                    seed=derive_seed(args.seed, "scripted"))
        print(path)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    base = derive_seed(args.seed, "planted")
    rows, labels = [], []
    for i in range(args.count):
        level = i % 6
        clip = planted_clip(level, base + i)
        vid = f"planted_{i:03d}_L{level}"
        vec = assemble_features(motion_features(list(clip.frames), clip.fps), None, None, None)
        rows.append((vid, vec))
        labels.append(float(level))
        if args.write_clips:
            write_clip_manifest(clip, out / vid, vid)
    write_feature_table(out / "train_table.csv", DEFAULT_LAYOUT, rows, labels)
    print(out / "train_table.csv")
    return EXIT_OK


COMMANDS = {
    "filter": cmd_filter, "tcm": cmd_tcm, "fuse": cmd_fuse, "qa-gen": cmd_qa_gen,
    "answer": cmd_answer, "eval": cmd_eval, "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dyncog: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as exc:
        print(f"dyncog: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (DataError, MalformedGeneration) as exc:
        print(f"dyncog: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DyncogError as exc:
        print(f"dyncog: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, ValueError) as exc:
        print(f"dyncog: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
