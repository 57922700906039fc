"""Command-line harness.

Subcommands: simulate, filter, match, pipeline, sweep-shift, verify.
Every run writes a manifest next to its primary output; `verify` reruns
a manifest into a scratch directory and compares artifact digests.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from .correction import bag_records
from .filtering import filter_batch
from .matching import match_scene
from .metrics import correspondence_score, map_at, pooled_correspondence
from .pipeline import NumericError, PlaConfig, TrainConfig, run_pipeline
from .records import (RecordError, file_digest, read_manifest, read_records,
                      write_csv, write_manifest, write_records)
from .schedule import StageConfig
from .simulate import (GenerationError, SceneConfig, SimDetectorParams, detect,
                       generate_scenes, rgb_proposals, scene_from_record,
                       scene_to_record)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

OUTPUT_DIR_ENV = "CROSSPAIR_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resolve_out(path) -> Path:
    path = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        return Path(base) / path
    return path


def _load_scenes(path):
    return [scene_from_record(r) for r in read_records(path)]


def build_parser() -> _Parser:
    p = _Parser(prog="crosspair")
    sub = p.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic scene stream")
    sim.add_argument("--scenes", type=int, default=100)
    sim.add_argument("--boxes", type=int, default=8)
    sim.add_argument("--canvas", type=int, nargs=2, default=[640, 640])
    sim.add_argument("--shift-max", type=float, default=15.0)
    sim.add_argument("--jitter", type=float, default=0.0)
    sim.add_argument("--angle-jitter", type=float, default=0.0)
    sim.add_argument("--dropout", type=float, default=0.0)
    sim.add_argument("--spurious", type=float, default=0.0)
    sim.add_argument("--classes", type=int, default=5)
    sim.add_argument("--confidence-noise", type=float, default=0.1)
    sim.add_argument("--offset", type=float, nargs=2, default=None,
                     help="force this true offset for every scene")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("-o", "--output", required=True)

    flt = sub.add_parser("filter", help="score-filter RGB observations per batch")
    flt.add_argument("--input", required=True)
    flt.add_argument("--batch-size", type=int, default=16)
    flt.add_argument("--per-class", action="store_true")
    flt.add_argument("-o", "--output", required=True)

    mat = sub.add_parser("match", help="filter then match each scene")
    mat.add_argument("--input", required=True)
    mat.add_argument("--beta", type=float, default=1.0)
    mat.add_argument("--batch-size", type=int, default=16)
    mat.add_argument("--no-plf", action="store_true")
    mat.add_argument("--iou-match-only", action="store_true")
    mat.add_argument("-o", "--output", required=True)

    pipe = sub.add_parser("pipeline", help="run the full staged training loop")
    pipe.add_argument("--input", required=True)
    pipe.add_argument("--k1", type=int, default=20)
    pipe.add_argument("--k2", type=int, default=10)
    pipe.add_argument("--k3", type=int, default=15)
    pipe.add_argument("--k4", type=int, default=20)
    pipe.add_argument("--beta", type=float, default=1.0)
    pipe.add_argument("--ema-decay", type=float, default=0.9999)
    pipe.add_argument("--lr", type=float, default=0.25)
    pipe.add_argument("--steps-per-epoch", type=int, default=20)
    pipe.add_argument("--batch-size", type=int, default=16)
    pipe.add_argument("--no-plf", action="store_true")
    pipe.add_argument("--no-sdlm", action="store_true")
    pipe.add_argument("--no-dlc", action="store_true")
    pipe.add_argument("--dlc-improve-only", action="store_true")
    pipe.add_argument("--iou-match-only", action="store_true")
    pipe.add_argument("--ema-reset", action="store_true")
    pipe.add_argument("--skip-stage1", action="store_true")
    pipe.add_argument("--skip-stage3", action="store_true")
    pipe.add_argument("-o", "--output", required=True)

    swp = sub.add_parser("sweep-shift", help="position-shift robustness sweep")
    swp.add_argument("--min", type=float, default=-15.0)
    swp.add_argument("--max", type=float, default=15.0)
    swp.add_argument("--step", type=float, default=3.0)
    swp.add_argument("--scenes", type=int, default=30)
    swp.add_argument("--boxes", type=int, default=8)
    swp.add_argument("--beta", type=float, default=1.0)
    swp.add_argument("--jitter", type=float, default=0.0)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("-o", "--output", required=True)

    ver = sub.add_parser("verify", help="re-run a manifest and compare digests")
    ver.add_argument("manifest")
    return p


def _scene_cfg(args) -> SceneConfig:
    return SceneConfig(
        count=args.scenes, boxes_per_scene=args.boxes,
        canvas=tuple(args.canvas), shift_max=args.shift_max,
        jitter=args.jitter, angle_jitter=args.angle_jitter,
        dropout_rate=args.dropout, spurious_rate=args.spurious,
        class_count=args.classes, seed=args.seed,
        confidence_noise=args.confidence_noise,
        offset_override=tuple(args.offset) if args.offset else None)


def cmd_simulate(args):
    out = _resolve_out(args.output)
    cfg = _scene_cfg(args)
    scenes = generate_scenes(cfg)
    write_records(out, [scene_to_record(s) for s in scenes])
    config = vars(args).copy()
    config.pop("subcommand", None)
    write_manifest(out, "simulate", _plain(config), args.seed, [out])
    print(f"wrote {len(scenes)} scenes to {out}")
    return EXIT_OK


def _batches(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def cmd_filter(args):
    out = _resolve_out(args.output)
    scenes = _load_scenes(args.input)
    records = []
    for batch in _batches(scenes, args.batch_size):
        flat = [(s.scene_id, o) for s in batch for o in s.rgb_obs]
        kept, thr = filter_batch([o for _, o in flat], per_class=args.per_class)
        kept_ids = {(sid, o.source_id) for (sid, o) in flat if o in kept}
        for s in batch:
            records.append({
                "scene_id": s.scene_id,
                "kept_ids": sorted(o.source_id for o in s.rgb_obs
                                   if (s.scene_id, o.source_id) in kept_ids),
                "batch": {"mu": thr.mu, "sigma": thr.sigma,
                          "tau": thr.tau, "n": thr.n},
            })
    write_records(out, records)
    config = vars(args).copy()
    config.pop("subcommand", None)
    write_manifest(out, "filter", _plain(config), 0, [out])
    print(f"filtered {len(scenes)} scenes to {out}")
    return EXIT_OK


def cmd_match(args):
    out = _resolve_out(args.output)
    scenes = _load_scenes(args.input)
    records, scores = [], []
    for batch in _batches(scenes, args.batch_size):
        pools = {s.scene_id: list(s.rgb_obs) for s in batch}
        if not args.no_plf:
            flat = [o for s in batch for o in pools[s.scene_id]]
            kept, _ = filter_batch(flat)
            kept_set = {id(o) for o in kept}
            pools = {sid: [o for o in pool if id(o) in kept_set]
                     for sid, pool in pools.items()}
        for s in batch:
            result = match_scene(s.ir_boxes, pools[s.scene_id], args.beta,
                                 use_search_region=not args.iou_match_only)
            scores.append(correspondence_score(result, s))
            records.append({
                "scene_id": s.scene_id,
                "pairs": [[i, j, v] for i, j, v in result.pairs],
                "unmatched_ir": list(result.unmatched_ir),
                "unmatched_rgb": list(result.unmatched_rgb),
            })
    write_records(out, records)
    agg = pooled_correspondence(scores)
    stats = {"precision": agg.precision, "recall": agg.recall,
             "correct": agg.correct, "pairs": agg.pair_count,
             "true_correspondences": agg.true_count}
    stats_path = Path(str(out) + ".stats.json")
    with open(stats_path, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    config = vars(args).copy()
    config.pop("subcommand", None)
    write_manifest(out, "match", _plain(config), 0, [out, stats_path])
    print(json.dumps(stats))
    return EXIT_OK


def cmd_pipeline(args):
    out = _resolve_out(args.output)
    scenes = _load_scenes(args.input)
    stage_cfg = StageConfig(args.k1, args.k2, args.k3, args.k4)
    pla = PlaConfig(beta=args.beta, use_plf=not args.no_plf,
                    use_sdlm=not args.no_sdlm, use_dlc=not args.no_dlc,
                    dlc_improve_only=args.dlc_improve_only,
                    iou_match_only=args.iou_match_only)
    train = TrainConfig(learning_rate=args.lr,
                        steps_per_epoch=args.steps_per_epoch,
                        ema_decay=args.ema_decay, ema_reset=args.ema_reset,
                        batch_size=args.batch_size,
                        skip_stage1=args.skip_stage1,
                        skip_stage3=args.skip_stage3)
    report = run_pipeline(scenes, stage_cfg, pla, train)
    recs = report.epoch_records()
    recs.append({"summary": report.summary()})
    write_records(out, recs)
    csv_path = Path(str(out) + ".csv")
    header = ["epoch", "phase", "lambda", "total_loss", "matched_count",
              "copied_count", "updated_count", "mean_center_error_ir",
              "mean_center_error_rgb"]
    rows = []
    for r in report.epochs:
        total = sum(r.loss_terms.values())
        rows.append([r.epoch, r.phase, r.lam, total, r.matched_count,
                     r.copied_count, r.updated_count, r.mean_center_error_ir,
                     r.mean_center_error_rgb])
    write_csv(csv_path, header, rows)
    bag_path = Path(str(out) + ".bags.jsonl")
    write_records(bag_path, [rec for sid in sorted(report.bags)
                             for rec in bag_records(report.bags[sid])])
    config = vars(args).copy()
    config.pop("subcommand", None)
    write_manifest(out, "pipeline", _plain(config), 0,
                   [out, csv_path, bag_path])
    print(json.dumps(report.summary()))
    return EXIT_OK


def cmd_sweep_shift(args):
    out = _resolve_out(args.output)
    if args.min > args.max:
        raise UsageError("--min must be <= --max")
    if args.step <= 0:
        raise UsageError("--step must be positive")
    grid = []
    v = args.min
    while v <= args.max + 1e-9:
        grid.append(round(v, 9))
        v += args.step
    if not grid:
        raise UsageError("empty sweep grid")
    params = SimDetectorParams((0.0, 0.0), 0.0)
    rows = []
    for dx in grid:
        for dy in grid:
            cfg = SceneConfig(count=args.scenes, boxes_per_scene=args.boxes,
                              jitter=args.jitter, seed=args.seed,
                              offset_override=(dx, dy))
            scenes = generate_scenes(cfg)
            scores = []
            ir_maps, rgb_maps = [], []
            for s in scenes:
                pool = list(s.rgb_obs)
                kept, _ = filter_batch(pool)
                result = match_scene(s.ir_boxes, kept, args.beta)
                scores.append(correspondence_score(result, s))
                gts = [(b, c) for _, b, c in s.ir_gt]
                ir_maps.append(map_at(detect(params, s, "ir"), gts))
                rgb_maps.append(map_at(detect(params, s, "rgb"), gts))
            agg = pooled_correspondence(scores)
            rows.append([dx, dy,
                         sum(ir_maps) / len(ir_maps),
                         sum(rgb_maps) / len(rgb_maps),
                         agg.recall if agg.recall is not None else 0.0,
                         agg.precision if agg.precision is not None else 0.0])
    write_csv(out, ["dx", "dy", "ir_map", "rgb_map",
                    "match_recall", "match_precision"], rows)
    config = vars(args).copy()
    config.pop("subcommand", None)
    write_manifest(out, "sweep-shift", _plain(config), args.seed, [out])
    print(f"wrote {len(rows)} sweep rows to {out}")
    return EXIT_OK


def cmd_verify(args):
    manifest = read_manifest(args.manifest)
    sub = manifest["subcommand"]
    config = dict(manifest["config"])
    with tempfile.TemporaryDirectory() as tmp:
        argv = [sub]
        for key, val in config.items():
            flag = "--" + key.replace("_", "-")
            if key == "output":
                continue
            if isinstance(val, bool):
                if val:
                    argv.append(flag)
            elif val is None:
                continue
            elif isinstance(val, list):
                argv.append(flag)
                argv.extend(str(v) for v in val)
            else:
                argv.extend([flag, str(val)])
        out_name = os.path.basename(str(config["output"]))
        argv.extend(["-o", os.path.join(tmp, out_name)])
        rc = run(argv)
        if rc != EXIT_OK:
            print(f"verify: rerun failed with exit code {rc}")
            return EXIT_DATA
        ok = True
        base = os.path.dirname(os.path.abspath(args.manifest))
        for name, digest in manifest["artifact_digests"].items():
            rerun = file_digest(os.path.join(tmp, name))
            current_path = os.path.join(base, name)
            current = (file_digest(current_path)
                       if os.path.exists(current_path) else None)
            good = rerun == digest and current == digest
            if not good:
                ok = False
            print(f"verify: {name}: {'ok' if good else 'MISMATCH'}")
    if not ok:
        return EXIT_DATA
    print("verify: all digests match")
    return EXIT_OK


def _plain(config: dict) -> dict:
    out = {}
    for k, v in config.items():
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "match": cmd_match,
    "pipeline": cmd_pipeline,
    "sweep-shift": cmd_sweep_shift,
    "verify": cmd_verify,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RecordError, GenerationError, FileNotFoundError, KeyError,
            ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
