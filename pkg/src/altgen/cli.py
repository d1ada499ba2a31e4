"""``altgen`` command line.

Exit codes: 0 success, 2 when any icon or item failed, 64 on usage errors
(bad flags, missing inputs, invalid configuration).
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import Optional, Sequence

from .annotate import Annotator, IconOutcome, WatchAnnotator, annotate_paths
from .config import ConfigError, ToolConfig, load_config
from .dataset import (KeywordClassifier, DatasetStats, build_icon_dataset, load_rico_dir, read_manifest,
                      sample_finetune_subset, sample_r1, write_manifest)
from .genai.client import ChatClient, ResultCache
from .genai.costs import account_costs, finetune_cost
from .genai.finetune import (FinetuneValidationError, TrainingExample, estimate_training_tokens,
                             export_finetune_dataset, validate_finetune_file)
from .layout import is_layout_file
from .genai.prompts import BUILTIN, ImagePart, PromptTemplates
from .metrics.ablation import run_ablation_suite
from .metrics.report import EmptyEvaluationError, evaluate, read_eval_records
from .mock import MockBackend
from .model import AblationConfig, GenerationMode, ImageScope, Variant
from .pipeline import prepare_samples, run_generation
from .vision import CommandUpscaler, engine_from_spec, to_png

log = logging.getLogger("altgen")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON configuration file")
    p.add_argument("--mode", choices=("textt", "mmt"))
    p.add_argument("--image-scope", choices=("icon", "container"))
    p.add_argument("--ablate", nargs="+", action="extend", choices=("ocr", "resource-id", "parent-sibling"),
                   metavar="{ocr,resource-id,parent-sibling}")
    p.add_argument("--seed", type=int)
    p.add_argument("--cache", metavar="DIR", help="result cache directory ('none' disables it)")
    p.add_argument("--mock", metavar="FIXTURE", help="serve replies from a local mock backend")
    p.add_argument("--force", action="store_true", help="overwrite existing contentDescription values")
    p.add_argument("--dry-run", action="store_true", help="print would-be injections without writing")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="altgen", description="Context-aware alt-text for mobile UI icons.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("annotate", parents=[common], help="inject alt-text into layout files")
    p.add_argument("target", help="a layout XML file or a project directory")

    p = sub.add_parser("watch", parents=[common], help="annotate icons as they are added")
    p.add_argument("root", help="project directory to watch")
    p.add_argument("--polling", action="store_true", help="poll instead of using OS notifications")

    p = sub.add_parser("eval", parents=[common], help="score predictions or a generation run")
    p.add_argument("--predictions", help="JSONL of {icon_ref, candidate, references}")
    p.add_argument("--manifest", help="dataset manifest (JSONL)")
    p.add_argument("--screens", help="directory of Rico view hierarchies and screenshots")
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--costs", help="write the cost summary here")

    p = sub.add_parser("ablate", parents=[common], help="run the component-removal grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--screens", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True, help="grid JSON output")

    p = sub.add_parser("export-finetune", parents=[common], help="write a fine-tuning dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--screens", required=True)
    p.add_argument("--out", required=True, help="JSONL output")
    p.add_argument("--per-class-cap", type=int, default=15)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--classes", help="icon class keyword table (JSON)")

    p = sub.add_parser("stats", parents=[common], help="icon and label counts per split")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("build-dataset", parents=[common], help="join captions to filtered icons")
    p.add_argument("--screens", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True, help="manifest output (JSONL)")
    p.add_argument("--r1", action="store_true", help="keep one random label per train/valid icon")

    p = sub.add_parser("mock-server", help="run the fixture-driven mock backend")
    p.add_argument("fixture")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    return parser


# -- shared setup ------------------------------------------------------------

def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def effective_config(args) -> ToolConfig:
    cfg = load_config(_require(args.config, "--config") if args.config else None)
    changes = {}
    for flag, key in (("mode", "mode"), ("image_scope", "image_scope"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "ablate", None):
        changes["ablate"] = tuple(args.ablate)
    if getattr(args, "cache", None):
        changes["cache_dir"] = None if args.cache == "none" else args.cache
    return dataclasses.replace(cfg, **changes) if changes else cfg


def mode_of(cfg: ToolConfig) -> GenerationMode:
    return GenerationMode(Variant.TEXTT if cfg.mode == "textt" else Variant.MMT, ImageScope(cfg.image_scope))


def templates_of(cfg: ToolConfig) -> PromptTemplates:
    t = cfg.templates
    return BUILTIN.override(t.textt, t.mmt, t.classifier)


@contextlib.contextmanager
def backend(args, cfg: ToolConfig):
    """Yield a client and cache, starting the mock server when ``--mock`` is given."""
    mock = None
    bcfg = cfg.backend
    if getattr(args, "mock", None):
        mock = MockBackend(_require(args.mock, "--mock fixture")).start()
        bcfg = dataclasses.replace(bcfg, endpoint=mock.url, backoff=min(bcfg.backoff, 0.05))
    client = ChatClient(bcfg)
    cache = ResultCache(Path(cfg.cache_dir)) if cfg.cache_dir else None
    try:
        yield client, cache
    finally:
        client.close()
        if mock is not None:
            mock.stop()


def annotator_of(args, cfg: ToolConfig, client, cache) -> Annotator:
    if cfg.mode == "mmt" and cfg.image_scope == "container":
        raise UsageError("container image scope needs screenshots; use it with eval, ablate or export-finetune")
    return Annotator(
        client=client, cache=cache, mode=mode_of(cfg), ablation=AblationConfig.from_flags(cfg.ablate),
        ocr=engine_from_spec(cfg.ocr), ocr_min_confidence=cfg.ocr_min_confidence,
        ocr_on_standardized=cfg.ocr_on_standardized,
        upscaler=CommandUpscaler(cfg.upscaler) if cfg.upscaler else None,
        label_fallback=cfg.label_fallback, templates=templates_of(cfg), force=args.force,
        dry_run=args.dry_run, max_workers=cfg.backend.max_in_flight)


def _outcome_row(o: IconOutcome, base: Path) -> str:
    try:
        name = o.file.relative_to(base)
    except ValueError:
        name = o.file
    ident = o.resource_id or "/".join(map(str, o.path)) or "root"
    result = f'"{o.alt_text}"' if o.ok else f"FAILED {o.error}"
    return f"{str(name):<40} {ident:<28} {result}"


def _samples(args, cfg: ToolConfig):
    manifest = _require(args.manifest, "--manifest")
    screens_dir = _require(args.screens, "--screens")
    icons = [i for i in read_manifest(manifest) if args.split in (None, "all") or i.split == args.split]
    if not icons:
        raise UsageError(f"no icons in split {args.split!r} of {manifest}")
    screens = {s.screen_id: s for s in load_rico_dir(screens_dir)}
    missing = sorted({i.screen_id for i in icons} - set(screens))
    if missing:
        raise UsageError(f"screens missing from {screens_dir}: {', '.join(missing[:5])}")
    return prepare_samples(icons, screens, ocr=engine_from_spec(cfg.ocr),
                           upscaler=CommandUpscaler(cfg.upscaler) if cfg.upscaler else None,
                           ocr_on_standardized=cfg.ocr_on_standardized, min_confidence=cfg.ocr_min_confidence)


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8", newline="\n")


# -- commands ----------------------------------------------------------------

def cmd_annotate(args, cfg: ToolConfig) -> int:
    target = _require(args.target, "target")
    if target.is_file() and not is_layout_file(target):
        raise UsageError(f"not a layout file (expected res/layout*/NAME.xml): {target}")
    with backend(args, cfg) as (client, cache):
        ann = annotator_of(args, cfg, client, cache)
        outcomes, errors = annotate_paths(ann, target)
    base = target if target.is_dir() else target.parent
    for o in outcomes:
        print(_outcome_row(o, base))
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    done = sum(o.ok for o in outcomes)
    failed = len(outcomes) - done
    verb = "would annotate" if args.dry_run else "annotated"
    print(f"{done} {verb}" + (f", {failed} failed" if failed else "")
          + (f", {len(errors)} unreadable layouts" if errors else ""))
    return EXIT_FAILED if failed or errors else EXIT_OK


def cmd_watch(args, cfg: ToolConfig) -> int:
    root = _require(args.root, "root")
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    previous = signal.signal(signal.SIGTERM, on_signal)

    def report(o: IconOutcome):
        print(_outcome_row(o, root) + f"  ({o.seconds * 1000:.0f} ms)", flush=True)

    def diagnostic(msg: str):
        print(f"diagnostic: {msg}", file=sys.stderr, flush=True)

    try:
        with backend(args, cfg) as (client, cache):
            ann = annotator_of(args, cfg, client, cache)
            w = cfg.watch
            runner = WatchAnnotator(ann, root, debounce=w.debounce, annotate_on_first_sight=w.annotate_on_first_sight,
                                    polling=w.polling or args.polling, on_outcome=report, on_diagnostic=diagnostic)
            with runner:
                print(f"watching {root}", flush=True)
                try:
                    while not stop.wait(0.2):
                        pass
                except KeyboardInterrupt:
                    pass
    finally:
        signal.signal(signal.SIGTERM, previous)
    return EXIT_OK


def cmd_eval(args, cfg: ToolConfig) -> int:
    if args.predictions:
        records = read_eval_records(_require(args.predictions, "--predictions"))
        report = evaluate(records)
        failures = 0
    else:
        samples = _samples(args, cfg)
        with backend(args, cfg) as (client, cache):
            run = run_generation(samples, mode_of(cfg), AblationConfig.from_flags(cfg.ablate), client=client,
                                 cache=cache, max_workers=cfg.max_workers, label_fallback=cfg.label_fallback,
                                 templates=templates_of(cfg))
        report, failures = run.report, len(run.failures)
        costs = account_costs(run.successes)
        _write(args.costs, json.dumps(costs.to_dict(), indent=2, sort_keys=True) + "\n")
        print(f"cost: {costs.inference_usd} USD over {costs.calls} calls ({costs.cached} cached)")
        for ref, err in run.failures:
            print(f"failed: {ref}: {err}", file=sys.stderr)
    _write(args.out, report.to_json())
    print(report.table())
    return EXIT_FAILED if failures else EXIT_OK


def cmd_ablate(args, cfg: ToolConfig) -> int:
    samples = _samples(args, cfg)
    with backend(args, cfg) as (client, cache):
        grid = run_ablation_suite(samples, client=client, cache=cache, max_workers=cfg.max_workers,
                                  label_fallback=cfg.label_fallback, templates=templates_of(cfg))
    _write(args.out, grid.to_json())
    print(grid.table())
    return EXIT_FAILED if any(c.error for c in grid.cells) else EXIT_OK


def cmd_export_finetune(args, cfg: ToolConfig) -> int:
    manifest = _require(args.manifest, "--manifest")
    icons = [i for i in read_manifest(manifest) if i.split == "train"]
    if not icons:
        raise UsageError(f"no training icons in {manifest}")
    classify = KeywordClassifier.load(_require(args.classes, "--classes") if args.classes else None)
    subset, assigned = sample_finetune_subset(icons, classify, cap=args.per_class_cap, seed=cfg.seed)
    args.split = "train"
    screens = {s.screen_id: s for s in load_rico_dir(_require(args.screens, "--screens"))}
    samples = prepare_samples(subset, screens, ocr=engine_from_spec(cfg.ocr),
                              ocr_on_standardized=cfg.ocr_on_standardized, min_confidence=cfg.ocr_min_confidence)
    mode = mode_of(cfg)
    examples = []
    for icon, sample in zip(subset, samples):
        image = sample.container_image if mode.image_scope is ImageScope.CONTAINER else sample.icon_image
        examples.append(TrainingExample(sample.context, icon.labels[0],
                                        ImagePart(to_png(image)) if image is not None else None,
                                        assigned[icon.icon_ref], icon.icon_ref))
    try:
        sidecar = export_finetune_dataset(examples, mode, args.out, per_class_cap=args.per_class_cap,
                                          epochs=args.epochs, base_model=cfg.backend.model,
                                          provenance={"seed": cfg.seed, "manifest": manifest.name},
                                          templates=templates_of(cfg))
        n = validate_finetune_file(args.out)
    except FinetuneValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    lines = Path(args.out).read_text(encoding="utf-8").splitlines()
    tokens = estimate_training_tokens(lines)
    print(f"{n} examples -> {args.out} (config {sidecar})")
    print(f"estimated training cost: {finetune_cost(tokens, args.epochs)} USD for ~{tokens} tokens x {args.epochs} epochs")
    return EXIT_OK


def cmd_stats(args, cfg: ToolConfig) -> int:
    stats = DatasetStats.of(read_manifest(_require(args.manifest, "--manifest")))
    print(json.dumps(stats.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_build_dataset(args, cfg: ToolConfig) -> int:
    screens = list(load_rico_dir(_require(args.screens, "--screens")))
    build = build_icon_dataset(screens, _require(args.captions, "--captions"), _require(args.splits, "--splits"),
                               seed=cfg.seed, thresholds=cfg.size_filter)
    icons = sample_r1(build.icons, cfg.seed) if args.r1 else build.icons
    write_manifest(icons, args.out)
    print(json.dumps(DatasetStats.of(icons).to_dict(), indent=2, sort_keys=True))
    for reason, n in sorted(build.diagnostics.items()):
        print(f"skipped {n} rows: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_mock_server(args, cfg=None) -> int:
    server = MockBackend(_require(args.fixture, "fixture"), args.host, args.port).start()
    print(f"mock backend at {server.url}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *a: stop.set())
    try:
        while not stop.wait(0.5):
            pass
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


COMMANDS = {
    "annotate": cmd_annotate, "watch": cmd_watch, "eval": cmd_eval, "ablate": cmd_ablate,
    "export-finetune": cmd_export_finetune, "stats": cmd_stats, "build-dataset": cmd_build_dataset,
    "mock-server": cmd_mock_server,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mock-server":
            return cmd_mock_server(args)
        cfg = effective_config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, EmptyEvaluationError, ValueError) as exc:
        print(f"altgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
