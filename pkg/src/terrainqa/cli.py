"""Command-line entry point: ``terrainqa <svf|stats|gen|score|report|sensitivity>``.

Exit status is 0 on success, 1 on validation failure and 2 on I/O failure.
Every command writes a ``<out>.manifest.json`` next to its output.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .metrics import SceneAnalysis, scene_statistics
from .qa import audit_balance, emit_jsonl, generate, load_jsonl
from .raster import load_grid, load_scene, save_grid
from .scorer import CategoryReport, aggregate, render_report, score_item
from .sensitivity import run_sensitivity, sample_items
from .svf import svf_raster
from .synthetic import city_scene

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(ValueError):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _manifest(args, inputs: list[str]) -> None:
    _write_json(_sidecar(Path(args.out), ".manifest.json"), {
        "command": args.command,
        "config_path": args.config,
        "inputs": inputs,
        "seed": args.seed,
        "tool_version": _version(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })


def _config(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    for name in ("count", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides["per_category_count" if name == "count" else name] = str(value)
    return load_config(args.config, overrides)


def _scenes(args, cfg: RunConfig) -> list[SceneAnalysis]:
    bundles = [load_scene(d) for d in args.scenes]
    bundles += [city_scene(i, size=args.synthetic_size) for i in range(args.synthetic)]
    if not bundles:
        raise UsageError("no scenes given: pass scene directories or --synthetic N")
    ids = [b.scene_id for b in bundles]
    if len(set(ids)) != len(ids):
        raise UsageError(f"duplicate scene ids: {ids}")
    return [SceneAnalysis(b, cfg.svf, cfg.viewshed) for b in bundles]


# --------------------------------------------------------------------------
# commands


def cmd_svf(args) -> int:
    cfg = _config(args)
    dsm = load_grid(args.dsm, "elevation")
    save_grid(svf_raster(dsm, cfg.svf, workers=args.workers or 1), args.out)
    _manifest(args, [args.dsm])
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _config(args)
    bundle = load_scene(args.scene)
    stats = scene_statistics(bundle, cfg.weights, cfg.svf)
    out = Path(args.out)
    _write_json(out, stats.to_dict())
    _write_json(_sidecar(out, ".grid3x3.json"), stats.grid3x3)
    _manifest(args, [args.scene])
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _config(args)
    analyses = _scenes(args, cfg)
    result = generate(analyses, cfg.gen, cfg.weights, cfg.svf)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_jsonl(result.items, out)
    _write_json(_sidecar(out, ".audit.json"), audit_balance(result.items))
    counts = result.counts()
    for cat in cfg.gen.categories:
        line = f"{cat:<26}{counts.get(cat, 0):>6}"
        if not counts.get(cat):
            print(f"warning: no scene was suitable for {cat}", file=sys.stderr)
        elif result.skipped.get(cat):
            line += f"  (skipped {result.skipped[cat]})"
        print(line)
    print(f"{'total':<26}{len(result.items):>6}")
    _manifest(args, list(args.scenes) + [f"synthetic:{i}" for i in range(args.synthetic)])
    return EXIT_OK


def _load_responses(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[str(rec["item_id"])] = str(rec.get("response_text", ""))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"{path}:{n}: bad response record ({exc})") from None
    return out


def cmd_score(args) -> int:
    items = load_jsonl(args.items)
    responses = _load_responses(args.responses)
    known = {it.item_id for it in items}
    unmatched = sorted(set(responses) - known)
    records = [score_item(it, responses.get(it.item_id, "")) for it in items]
    report = aggregate(records, items)
    report.unmatched_ids = unmatched
    _write_json(Path(args.out), report.to_dict())
    _sidecar(Path(args.out), ".txt").write_text(render_report(report) + "\n", encoding="utf-8")
    print(render_report(report))
    if unmatched:
        print(f"warning: {len(unmatched)} responses name unknown items: {unmatched[:5]}", file=sys.stderr)
    _manifest(args, [args.items, args.responses])
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = CategoryReport(**json.loads(Path(args.report).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"{args.report}: not a score report ({exc})") from None
    text = render_report(report) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    _manifest(args, [args.report])
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _config(args)
    analyses = _scenes(args, cfg)
    items = sample_items(analyses, args.questions, cfg.gen.seed, cfg.weights, cfg.gen)
    if len(items) < args.questions:
        print(f"warning: only {len(items)} feasible questions (asked for {args.questions})", file=sys.stderr)
    runs = run_sensitivity(analyses, items, cfg.weights, args.delta)
    payload = {
        "category": "sky_visibility",
        "n_questions": len(items),
        "delta": args.delta,
        "runs": [r.to_dict() for r in runs],
        "max_change_rate": max((r.change_rate for r in runs[1:]), default=0.0),
    }
    _write_json(Path(args.out), payload)
    for r in runs:
        print(f"{r.coefficient:<18}{r.delta:+.2f}  {r.changed:>3}/{r.n:<3} {r.change_rate:5.1f}%")
    _manifest(args, list(args.scenes) + [f"synthetic:{i}" for i in range(args.synthetic)])
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", required=True, help="output path")

    scenes = argparse.ArgumentParser(add_help=False)
    scenes.add_argument("scenes", nargs="*", help="scene directories (dsm.grid, seg.grid, ...)")
    scenes.add_argument("--synthetic", type=int, default=0, metavar="N",
                        help="also use N built-in synthetic town scenes")
    scenes.add_argument("--synthetic-size", type=int, default=128)

    p = argparse.ArgumentParser(prog="terrainqa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("svf", parents=[common], help="SVF raster from a DSM grid")
    s.add_argument("dsm")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_svf)

    s = sub.add_parser("stats", parents=[common], help="scene statistics JSON")
    s.add_argument("scene")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("gen", parents=[common, scenes], help="generate benchmark items")
    s.add_argument("--count", type=int, help="items per scene and category")
    s.add_argument("--workers", type=int, help="scene-level threads")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("score", parents=[common], help="score responses against items")
    s.add_argument("items")
    s.add_argument("responses", help="JSONL of {item_id, response_text}")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("report", parents=[common], help="render a score report as a table")
    s.add_argument("report")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("sensitivity", parents=[common, scenes], help="sky-visibility weight sensitivity")
    s.add_argument("--questions", type=int, default=30)
    s.add_argument("--delta", type=float, default=0.1)
    s.set_defaults(func=cmd_sensitivity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"error: {name + ': ' if name else ''}{exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
