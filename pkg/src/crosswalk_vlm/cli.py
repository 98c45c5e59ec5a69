"""Command-line entry point.

Settings come from flags, optionally seeded by a ``--config-file`` of
``key = value`` lines (``#`` starts a comment; keys are the long flag names
with ``-`` or ``_``). Flags always win over the file.

Exit codes: 0 success, 1 usage error, 2 data error, 3 gateway error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import PipelineError
from .evaluation import format_table
from .gateway import GatewayConfig
from .pipeline import (
    PipelineConfig,
    cmd_build,
    cmd_eval,
    cmd_export_osm,
    cmd_label,
    cmd_report,
)
from .prompts import build_template
from .render import DatasetConfig, RenderStyle

EXIT_USAGE = 1

# key -> (type, default)
SETTINGS: dict[str, tuple] = {
    "raster": (Path, None),
    "osm": (Path, None),
    "overrides": (Path, None),
    "dataset": (Path, Path("dataset")),
    "configs": (str, "plain,separated,overlaid,blurred"),
    "config": (str, None),
    "seed": (int, 0),
    "target": (str, "100"),
    "size": (int, 256),
    "stride": (int, None),
    "workers": (int, 1),
    "line_width": (float, 3.0),
    "dot_radius": (float, 5.0),
    "blur_sigma": (float, 5.0),
    "road_buffer": (float, 20.0),
    "mode": (str, "replay"),
    "endpoint": (str, GatewayConfig.endpoint),
    "model": (str, GatewayConfig.model),
    "temperature": (float, 0.0),
    "max_tokens": (int, 1024),
    "api_key_env": (str, GatewayConfig.api_key_env),
    "transcripts": (Path, None),
    "max_parallel": (int, 4),
    "max_attempts": (int, 4),
    "backoff_base": (float, 1.0),
    "policy": (str, "lenient"),
    "out": (Path, None),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path: Path) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string("[pipeline]\n" + Path(path).read_text(encoding="utf-8"))
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    out = {}
    for key, value in cp["pipeline"].items():
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise UsageError(f"{path}: unknown setting {key!r}")
        out[key] = value
    return out


def _flag(p: argparse.ArgumentParser, *names: str, **kw) -> None:
    # defaults stay None so we can tell "not given" from "given"
    p.add_argument(*names, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crosswalk-vlm", description="Zero-shot crosswalk labeling pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config-file", type=Path, help="key = value settings file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def dataset_flags(p):
        _flag(p, "--dataset", help="dataset root directory")

    b = sub.add_parser("build", help="render patch datasets from a raster and OSM extract")
    dataset_flags(b)
    _flag(b, "--raster", help="GeoTIFF orthoimage")
    _flag(b, "--osm", help="OSM XML extract")
    _flag(b, "--overrides", help="JSON manual label overrides")
    _flag(b, "--configs", help="comma-separated dataset configs")
    _flag(b, "--seed")
    _flag(b, "--target", help="samples per class, or 'all' for every labeled approach")
    _flag(b, "--size")
    _flag(b, "--stride")
    _flag(b, "--workers")
    for name in ("--line-width", "--dot-radius", "--blur-sigma", "--road-buffer"):
        _flag(b, name)

    s = sub.add_parser("show-prompt", help="print the prompt template for a config")
    _flag(s, "--config", help="dataset config")

    lab = sub.add_parser("label", help="classify a built dataset")
    dataset_flags(lab)
    _flag(lab, "--config", help="dataset config")
    _flag(lab, "--mode", choices=("live", "record", "replay"))
    _flag(lab, "--transcripts", help="transcript directory")
    for name in ("--endpoint", "--model", "--temperature", "--max-tokens", "--api-key-env",
                 "--max-parallel", "--max-attempts", "--backoff-base"):
        _flag(lab, name)

    e = sub.add_parser("eval", help="score verdicts against ground truth")
    dataset_flags(e)
    _flag(e, "--config", help="dataset config")
    _flag(e, "--policy", choices=("lenient", "strict"))

    x = sub.add_parser("export-osm", help="write positive detections as osmChange XML")
    dataset_flags(x)
    _flag(x, "--config", help="dataset config")
    _flag(x, "--policy", choices=("lenient", "strict"))
    _flag(x, "--out", help="output file (default stdout)")

    r = sub.add_parser("report", help="print the metrics table for every evaluated config")
    dataset_flags(r)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and flags, and coerce types."""
    file_values = read_config_file(args.config_file) if args.config_file else {}
    settings = {}
    for key, (typ, default) in SETTINGS.items():
        raw = getattr(args, key, None)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            settings[key] = default
            continue
        try:
            settings[key] = typ(raw)
        except ValueError:
            raise UsageError(f"bad value for {key}: {raw!r}") from None
    return settings


def _dataset_config(value: str | None) -> DatasetConfig:
    if value is None:
        raise UsageError("--config is required")
    try:
        return DatasetConfig(value.lower())
    except ValueError:
        raise UsageError(f"unknown config {value!r}; choose from {[c.value for c in DatasetConfig]}") from None


def pipeline_config(s: dict, labeling: bool = False) -> PipelineConfig:
    try:
        configs = tuple(DatasetConfig(c.strip().lower()) for c in s["configs"].split(",") if c.strip())
        target = None if s["target"].lower() == "all" else int(s["target"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        style = RenderStyle(
            line_width=s["line_width"],
            dot_radius=s["dot_radius"],
            blur_sigma=s["blur_sigma"],
            road_buffer=s["road_buffer"],
        )
        gateway = GatewayConfig(
            endpoint=s["endpoint"],
            model=s["model"],
            temperature=s["temperature"],
            max_tokens=s["max_tokens"],
            api_key_env=s["api_key_env"],
            # only `label` talks to the gateway; elsewhere just the model id matters
            mode=s["mode"] if labeling else "live",
            transcript_dir=s["transcripts"],
            max_parallel=s["max_parallel"],
            max_attempts=s["max_attempts"],
            backoff_base=s["backoff_base"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return PipelineConfig(
        dataset_root=s["dataset"],
        raster=s["raster"],
        osm=s["osm"],
        overrides=s["overrides"],
        configs=configs,
        style=style,
        gateway=gateway,
        seed=s["seed"],
        target=target,
        size=s["size"],
        stride=s["stride"],
        workers=s["workers"],
        policy=s["policy"],
    )


def run(args: argparse.Namespace) -> int:
    s = resolve(args)
    if args.command == "show-prompt":
        t = build_template(_dataset_config(s["config"]))
        sys.stdout.write(t.system_text)
        sys.stdout.write(f"\n--- user ---\n{t.user_preamble}\n")
        return 0

    cfg = pipeline_config(s, labeling=args.command == "label")
    if args.command == "build":
        manifests = cmd_build(cfg)
        for c, m in manifests.items():
            counts = ", ".join(f"{k}={v}" for k, v in m.class_counts.items())
            print(f"{c.value}: {len(m.samples)} samples ({counts})")
    elif args.command == "label":
        doc = cmd_label(cfg, _dataset_config(s["config"]))
        print(f"{doc['config']}: {len(doc['records'])} verdicts")
    elif args.command == "eval":
        result = cmd_eval(cfg, _dataset_config(s["config"]), s["policy"])
        m = result["metrics"]
        sys.stdout.write(format_table([m]))
        print(f"policy={m.policy} excluded={m.excluded} misclassified={len(result['misclassifications'])}")
    elif args.command == "export-osm":
        xml = cmd_export_osm(cfg, _dataset_config(s["config"]), s["policy"])
        if s["out"]:
            Path(s["out"]).write_text(xml, encoding="utf-8")
        else:
            sys.stdout.write(xml)
    elif args.command == "report":
        sys.stdout.write(cmd_report(cfg))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except UsageError as exc:
        print(f"crosswalk-vlm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"crosswalk-vlm: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"crosswalk-vlm: [data] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
