"""Command-line interface: generate, annotate, evaluate, stats.

Exit codes: 0 success, 1 input/usage error, 2 internal error.  Diagnostics
go to stderr; reports and labels go to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import PipelineConfig
from .errors import BoxliftError
from .evaluate import build_report, frames_histogram
from .extraction import build_tracks
from .refine import annotate_track
from .scene_io import load_scene, read_pseudo_labels, save_scene, write_pseudo_labels
from .synthetic import SceneConfig, generate_scene


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boxlift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic scene")
    gen.add_argument("--config", required=True, help="scene config JSON")
    gen.add_argument("--seed", type=int, default=None, help="override the config seed")
    gen.add_argument("--out", required=True, help="output scene directory")
    gen.set_defaults(func=_cmd_gen)

    ann = sub.add_parser("annotate", help="produce pseudo-labels for a scene")
    ann.add_argument("--dataset", required=True, help="scene directory")
    ann.add_argument("--out", required=True, help="output labels JSONL")
    ann.add_argument("--config", default=None, help="pipeline config JSON")
    ann.add_argument("--no-refine", action="store_true", help="emit coarse boxes only")
    ann.add_argument("--threads", type=int, default=1, help="worker threads")
    ann.set_defaults(func=_cmd_annotate)

    ev = sub.add_parser("eval", help="evaluate labels against scene ground truth")
    ev.add_argument("--dataset", required=True, help="scene directory")
    ev.add_argument("--labels", required=True, help="labels JSONL")
    ev.add_argument("--report", required=True, help="output report JSON")
    ev.add_argument("--config", default=None, help="pipeline config JSON")
    ev.set_defaults(func=_cmd_eval)

    st = sub.add_parser("stats", help="dataset statistics")
    st.add_argument("--dataset", required=True, help="scene directory")
    st.add_argument("--report", default=None, help="optional output JSON")
    st.set_defaults(func=_cmd_stats)
    return parser


def _load_pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json_file(args.config) if args.config else PipelineConfig()
    if getattr(args, "no_refine", False):
        cfg = dataclasses.replace(cfg, refine=False)
    return cfg


def _cmd_gen(args) -> int:
    cfg = SceneConfig.from_json_file(args.config)
    scene = generate_scene(cfg, seed=args.seed)
    out = save_scene(scene, args.out)
    n_tracks = len(scene.gt_tracks or {})
    print(f"wrote {out} ({len(scene.frames)} frames, {n_tracks} tracks)", file=sys.stderr)
    return 0


def _cmd_annotate(args) -> int:
    cfg = _load_pipeline_config(args)
    scene = load_scene(args.dataset)
    tracks = build_tracks(scene, cfg)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            labels = list(pool.map(lambda tc: annotate_track(tc[0], tc[1], cfg), tracks))
    else:
        labels = [annotate_track(track, cams, cfg) for track, cams in tracks]
    labels.sort(key=lambda lb: lb.track_id)
    write_pseudo_labels(labels, args.out)
    kept = sum(lb.kept for lb in labels)
    print(f"wrote {args.out} ({len(labels)} labels, {kept} kept)", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_pipeline_config(args)
    scene = load_scene(args.dataset)
    labels = read_pseudo_labels(args.labels)
    report = build_report(scene, labels, cfg)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    Path(args.report).write_text(text)
    print(f"wrote {args.report}", file=sys.stderr)
    return 0


def _cmd_stats(args) -> int:
    scene = load_scene(args.dataset)
    hist = frames_histogram(scene)
    stats = {
        "scene_id": scene.scene_id,
        "n_frames": len(scene.frames),
        "n_points": int(sum(f.n_points for f in scene.frames)),
        "n_tracks": len({a.track_id for f in scene.frames for a in f.annotations}),
        "frames_per_object": hist,
    }
    if args.report:
        Path(args.report).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.report}", file=sys.stderr)
    else:
        print(f"scene {stats['scene_id']}: {stats['n_frames']} frames, "
              f"{stats['n_tracks']} tracks, {stats['n_points']} points")
        for cls, entry in hist.items():
            print(f"  {cls}: {entry['n_tracks']} tracks, median {entry['median']:g} frames")
    return 0


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (BoxliftError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
