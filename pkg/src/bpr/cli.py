"""Command-line front end: ``bpr {gen,refine,eval,upperbound,sweep,export,import}``.

Options may come from a JSON file (``--config``); explicit flags win.
Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import metrics, pipeline, sceneio
from .extract import ExtractionConfig, Scheme
from .refine import ColorModelParams, RefinerKind, write_identity_outputs
from .synthgen import SynthConfig, generate_scene

log = logging.getLogger("bpr")

DEFAULTS = {
    "patch_size": 64,
    "pad": 0,
    "nms_thr": 0.25,
    "scheme": "dense-nms",
    "refiner": "colormodel",
    "input_size": 128,
    "seed": 42,
    "jobs": 1,
    "timing": False,
    "out": None,
    "exchange_dir": None,
    "external_cmd": None,
    "n": 20,
    "noise_sigma": 10.0,
    "bands": "1,2,3,inf",
}


class UsageError(ValueError):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so config-file values can fill the gaps
    p.add_argument("--config", type=Path, help="JSON file with option defaults")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--pad", type=int)
    p.add_argument("--nms-thr", type=float)
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--refiner", choices=[k.value for k in RefinerKind])
    p.add_argument("--input-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--timing", action="store_const", const=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--exchange-dir", type=Path)
    p.add_argument("--external-cmd", help="command run on each exchange dir; '{dir}' is substituted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpr", description="Boundary patch refinement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("-n", type=int, help="number of scenes")
    p.add_argument("--noise-sigma", type=float)

    p = sub.add_parser("refine", help="refine predictions of a scene or corpus")
    _add_common(p)
    p.add_argument("scene_dir", type=Path)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    _add_common(p)
    p.add_argument("pred_dir", type=Path)
    p.add_argument("gt_dir", type=Path, nargs="?")

    p = sub.add_parser("upperbound", help="GT band replacement study")
    _add_common(p)
    p.add_argument("scene_dir", type=Path)
    p.add_argument("--bands", help="comma separated distances in px, 'inf' allowed")

    p = sub.add_parser("sweep", help="compare extraction settings")
    _add_common(p)
    p.add_argument("scene_dir", type=Path)
    p.add_argument("--axis", required=True, choices=["nms", "patch_size", "scheme"])
    p.add_argument("--values", help="comma separated; patch_size values as size/pad")

    p = sub.add_parser("export", help="write patches for an external refiner")
    _add_common(p)
    p.add_argument("scene_dir", type=Path)
    p.add_argument("exchange", type=Path)
    p.add_argument("--train", action="store_true", help="training export: IoU > 0.5 filter, GT crops")

    p = sub.add_parser("import", help="reassemble external refiner outputs")
    _add_common(p)
    p.add_argument("scene_dir", type=Path)
    p.add_argument("exchange", type=Path)

    p = sub.add_parser("identity-refiner", help="stand-in external refiner echoing mask inputs")
    p.add_argument("exchange", type=Path)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path is not None:
        try:
            file_opts = json.loads(Path(cfg_path).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{cfg_path}: invalid JSON ({exc})") from exc
        if not isinstance(file_opts, dict):
            raise UsageError(f"{cfg_path}: expected a JSON object")
        for key, val in file_opts.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{cfg_path}: unknown option {key!r}")
            opts[key] = val
    for key, val in vars(args).items():
        if val is not None and key != "config":
            opts[key] = val
    return opts


def pipeline_config(opts: dict) -> pipeline.PipelineConfig:
    extraction = ExtractionConfig(
        scheme=opts["scheme"],
        patch_size=int(opts["patch_size"]),
        pad=int(opts["pad"]),
        nms_threshold=float(opts["nms_thr"]),
    )
    xdir = opts.get("exchange_dir")
    return pipeline.PipelineConfig(
        extraction=extraction,
        refiner=opts["refiner"],
        colormodel=ColorModelParams(),
        input_size=int(opts["input_size"]),
        exchange_dir=Path(xdir) if xdir else None,
        external_cmd=opts.get("external_cmd"),
        jobs=int(opts["jobs"]),
    )


def _require_out(opts: dict) -> Path:
    if opts.get("out") is None:
        raise UsageError("--out is required")
    return Path(opts["out"])


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1))


def cmd_gen(opts: dict) -> int:
    out = _require_out(opts)
    cfg = SynthConfig(seed=int(opts["seed"]), noise_sigma=float(opts["noise_sigma"]))
    for i in range(int(opts["n"])):
        sceneio.write_scene(generate_scene(cfg, i), out / f"scene_{i:04d}")
    print(f"wrote {opts['n']} scenes to {out}")
    return 0


def cmd_refine(opts: dict) -> int:
    out = _require_out(opts)
    config = pipeline_config(opts)
    scenes = sceneio.read_corpus(opts["scene_dir"])
    results = pipeline.refine_corpus(scenes, config)
    single = sceneio.is_scene_dir(opts["scene_dir"])
    for r in results:
        sceneio.write_scene(r.scene, out if single else out / r.scene.name)
    if opts["timing"]:
        summary = pipeline.timing_summary(results)
        print(pipeline.format_timing(summary))
        _write_json(out / "timing.json", summary)
    log.info("refined %d scene(s) into %s", len(results), out)
    return 0


def _load_eval_scenes(pred_dir, gt_dir) -> list:
    preds = sceneio.read_corpus(pred_dir)
    if gt_dir is None:
        return preds
    gts = sceneio.read_corpus(gt_dir)
    if len(preds) == 1 and len(gts) == 1:
        pairs = [(preds[0], gts[0])]
    else:
        by_name = {s.name: s for s in gts}
        pairs = [(s, by_name.get(s.name)) for s in preds]
    out = []
    for s, ref in pairs:
        if ref is None or ref.ground_truth is None:
            raise UsageError(f"no ground truth for scene {s.name!r} in {gt_dir}")
        out.append(replace(s, ground_truth=ref.ground_truth))
    return out


def cmd_eval(opts: dict) -> int:
    scenes = _load_eval_scenes(opts["pred_dir"], opts.get("gt_dir"))
    report = metrics.evaluate(scenes)
    print(metrics.format_table([("eval", report)]))
    if opts.get("out"):
        _write_json(Path(opts["out"]), report.to_dict())
    return 0


def parse_bands(text: str) -> list:
    bands = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        val = math.inf if tok in ("inf", "infinity", "∞") else float(tok)
        if not math.isinf(val) and val < 1:
            raise UsageError(f"band {tok!r} must be >= 1 or inf")
        bands.append(val)
    return bands


def cmd_upperbound(opts: dict) -> int:
    scenes = sceneio.read_corpus(opts["scene_dir"])
    rows = metrics.upper_bound_report(scenes, parse_bands(opts["bands"]))
    print(metrics.format_table(rows, "Dist."))
    if opts.get("out"):
        _write_json(Path(opts["out"]), [{"band": label, **rep.to_dict()} for label, rep in rows])
    return 0


SWEEP_DEFAULTS = {
    "nms": "0,0.15,0.25,0.35,0.45,0.55,0.65",
    "patch_size": "32/0,32/5,64/0,64/5,96/0",
    "scheme": "dense-nms,grid,instance",
}


def _sweep_configs(axis: str, values: str, opts: dict) -> list:
    out = []
    for tok in values.split(","):
        tok = tok.strip()
        o = dict(opts)
        if axis == "nms":
            o["nms_thr"] = float(tok)
        elif axis == "patch_size":
            size, _, pad = tok.partition("/")
            o["patch_size"], o["pad"] = int(size), int(pad or 0)
        else:
            o["scheme"] = tok
        out.append((tok, o))
    return out


def run_sweep(scenes: list, axis: str, values: str, opts: dict) -> list:
    rows = []
    for label, o in _sweep_configs(axis, values, opts):
        config = pipeline_config(o)
        t0 = time.perf_counter()
        results = pipeline.refine_corpus(scenes, config)
        elapsed = 1000.0 * (time.perf_counter() - t0) / max(len(scenes), 1)
        refined = [r.scene for r in results]
        report = metrics.evaluate(refined) if all(s.ground_truth is not None for s in scenes) else None
        rows.append(
            {
                "value": label,
                "patches_per_image": sum(r.n_patches for r in results) / max(len(results), 1),
                "patch_counts": [r.n_patches for r in results],
                "ms_per_image": elapsed,
                "report": report.to_dict() if report else None,
            }
        )
    return rows


def format_sweep(axis: str, rows: list) -> str:
    lines = [f"{axis:>12} {'#patch/img':>10} {'AP':>6} {'AP50':>6} {'AF':>6} {'ms/img':>8}"]
    for r in rows:
        rep = r["report"] or {}
        cells = [f"{100 * rep[k]:6.1f}" if k in rep and rep[k] != metrics.UNDEFINED else "     -"
                 for k in ("ap", "ap50", "af")]
        lines.append(f"{r['value']:>12} {r['patches_per_image']:>10.1f} {' '.join(cells)} {r['ms_per_image']:>8.1f}")
    return "\n".join(lines)


def cmd_sweep(opts: dict) -> int:
    scenes = sceneio.read_corpus(opts["scene_dir"])
    axis = opts["axis"]
    rows = run_sweep(scenes, axis, opts.get("values") or SWEEP_DEFAULTS[axis], opts)
    print(format_sweep(axis, rows))
    if opts.get("out"):
        _write_json(Path(opts["out"]), {"axis": axis, "rows": rows})
    return 0


def _exchange_targets(scene_root: Path, exchange: Path) -> list:
    if sceneio.is_scene_dir(scene_root):
        return [(scene_root, exchange)]
    return [(d, exchange / d.name) for d in sceneio.scene_dirs(scene_root)]


def cmd_export(opts: dict) -> int:
    config = pipeline_config(opts)
    total = 0
    for sdir, xdir in _exchange_targets(Path(opts["scene_dir"]), Path(opts["exchange"])):
        manifest = pipeline.export_scene(sceneio.read_scene(sdir), config, xdir, training=opts["train"])
        total += len(manifest["entries"])
    print(f"exported {total} patches to {opts['exchange']}")
    return 0


def cmd_import(opts: dict) -> int:
    out = _require_out(opts)
    single = sceneio.is_scene_dir(opts["scene_dir"])
    for sdir, xdir in _exchange_targets(Path(opts["scene_dir"]), Path(opts["exchange"])):
        scene, n = pipeline.import_scene(sceneio.read_scene(sdir), xdir)
        sceneio.write_scene(scene, out if single else out / scene.name)
        log.info("%s: reassembled %d patches", scene.name, n)
    return 0


def cmd_identity_refiner(args) -> int:
    n = write_identity_outputs(args.exchange)
    print(f"wrote {n} identity outputs")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "upperbound": cmd_upperbound,
    "sweep": cmd_sweep,
    "export": cmd_export,
    "import": cmd_import,
}


def main(argv=None) -> int:
    level = os.environ.get("BPR_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "identity-refiner":
            return cmd_identity_refiner(args)
        return COMMANDS[args.command](resolve_options(args))
    except (OSError, subprocess.CalledProcessError) as exc:
        print(f"bpr {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"bpr {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
