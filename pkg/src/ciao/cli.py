"""Command-line entry point: ``ciao generate <source> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from . import __version__
from .diagrams import RendererConfig, extract_diagrams, render_all, substitute
from .errors import (
    CiaoError,
    CloneFailed,
    RepoNotFound,
    TemplateInvalid,
    TemplateSyntax,
    UnknownModelPrice,
)
from .flatten import FilterConfig, flatten_repository
from .llm import (
    API_KEY_ENV,
    DEFAULT_MODEL,
    Clock,
    FixedClock,
    Gateway,
    HttpProvider,
    MockProvider,
    Provider,
    accumulate_cost,
    load_price_table,
)
from .orchestrator import DocumentMeta, assemble, generate_all, mock_section_text
from .prompts import GlobalPromptConfig, TokenBudget, build_all_bundles
from .report import RunReport, SectionStats, write_report
from .template import DocumentationTemplate, default_template, parse_template

logger = logging.getLogger("ciao")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
DOCUMENT_NAME = "architecture.md"

_GIT_URL = re.compile(r"^(?:https?|git|ssh|file)://|^[\w.-]+@[\w.-]+:")


class UsageError(CiaoError):
    pass


@dataclass
class RunConfig:
    source: str
    out_dir: Path = Path("ciao-out")
    model_id: str = DEFAULT_MODEL
    template_path: Path | None = None
    renderer: RendererConfig = field(default_factory=lambda: RendererConfig("external"))
    budget: TokenBudget = field(default_factory=TokenBudget)
    jobs: int = 8
    dry_run: bool = False
    report_path: Path | None = None
    emit_readme: bool = False
    mock: bool = False
    mock_script: Path | None = None
    prices_path: Path | None = None
    clock_epoch: int | None = None
    temperature: float = 0.2
    max_output_tokens: int = 16_000
    dump_flattened: Path | None = None
    filters: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self):
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")

    @property
    def uses_mock(self) -> bool:
        return self.mock or self.mock_script is not None


def is_git_url(source: str) -> bool:
    return bool(_GIT_URL.match(source)) or (source.endswith(".git") and not Path(source).is_dir())


@contextmanager
def acquire_repository(source: str) -> Iterator[Path]:
    """Yield a local working tree for ``source``.

    Local directories are used in place. Git URLs are shallow-cloned into a
    temporary directory that is removed when the context exits.
    """
    if not is_git_url(source):
        path = Path(source)
        if not path.is_dir():
            raise RepoNotFound(f"no such directory: {source}")
        yield path
        return

    tmp = tempfile.mkdtemp(prefix="ciao-clone-")
    try:
        dest = Path(tmp) / "repo"
        try:
            proc = subprocess.run(
                ["git", "clone", "--depth", "1", "--quiet", source, str(dest)],
                capture_output=True,
                text=True,
                timeout=600,
                env={**os.environ, "GIT_TERMINAL_PROMPT": "0"},
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise CloneFailed(f"{source}: {exc}") from exc
        if proc.returncode != 0:
            raise CloneFailed(f"{source}: {proc.stderr.strip() or 'git clone failed'}")
        yield dest
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def repository_name(source: str) -> str:
    if is_git_url(source):
        name = source.rstrip("/").rsplit("/", 1)[-1].rsplit(":", 1)[-1]
        return name[:-4] if name.endswith(".git") else name
    return Path(source).resolve().name


def load_template(path: Path | None) -> DocumentationTemplate:
    if path is None:
        return default_template()
    try:
        return parse_template(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read template {path}: {exc}") from exc


def build_provider(cfg: RunConfig, template: DocumentationTemplate) -> Provider:
    def stub(request):
        return mock_section_text(template.by_id(request.label))

    if cfg.mock_script is not None:
        try:
            return MockProvider.from_json(cfg.mock_script.read_text(encoding="utf-8"), default=stub)
        except (OSError, ValueError) as exc:
            raise UsageError(f"bad mock script {cfg.mock_script}: {exc}") from exc
    if cfg.mock:
        return MockProvider(default=stub)
    return HttpProvider.from_env()


def emit_readme(repo_root: Path, document: Path) -> Path:
    """Append a link to the generated document to the repository README."""
    readme = next((p for p in sorted(repo_root.iterdir()) if p.name.lower() in ("readme.md", "readme")), None)
    readme = readme or repo_root / "README.md"
    link = os.path.relpath(document.resolve(), repo_root.resolve()).replace(os.sep, "/")
    existing = readme.read_text(encoding="utf-8") if readme.exists() else ""
    if f"]({link})" in existing:
        return readme
    block = (
        "\n## Architecture\n\n"
        f"System-level architecture documentation, generated from the source code: [{DOCUMENT_NAME}]({link}).\n"
    )
    sep = "" if not existing or existing.endswith("\n") else "\n"
    readme.write_text(existing + sep + block, encoding="utf-8")
    return readme


def _section_stats(sections, cost) -> list[SectionStats]:
    usd: dict[str, Decimal] = {}
    for c in cost.per_call:
        sid = c.label.split(":", 1)[0]
        usd[sid] = usd.get(sid, Decimal(0)) + c.usd
    return [
        SectionStats(s.section_id, s.duration_ms, s.usage[0], s.usage[1], usd.get(s.section_id, Decimal(0)), s.warnings)
        for s in sections
    ]


def run(cfg: RunConfig, provider: Provider | None = None, err=None) -> int:
    """Execute the whole pipeline; returns the process exit code."""
    err = err or sys.stderr
    clock = FixedClock(cfg.clock_epoch) if cfg.clock_epoch is not None else Clock()
    started = clock.now()
    t0 = clock.monotonic_ms()
    try:
        template = load_template(cfg.template_path)
        if provider is None and not cfg.dry_run and not cfg.uses_mock and not os.environ.get(API_KEY_ENV):
            raise UsageError(f"{API_KEY_ENV} is not set; export it, or use --dry-run / --mock")

        prices = None
        if not cfg.dry_run:
            prices = load_price_table(cfg.prices_path)
            if cfg.model_id not in prices:
                raise UnknownModelPrice(f"no price for model {cfg.model_id!r}; add it to a --prices file")

        out_dir = cfg.out_dir
        with acquire_repository(cfg.source) as root:
            flat, entries = flatten_repository(root, cfg.filters)
            out_dir.mkdir(parents=True, exist_ok=True)
            if cfg.dump_flattened:
                flat.write(cfg.dump_flattened)
            bundles = build_all_bundles(template, flat, GlobalPromptConfig(), cfg.budget)

            if cfg.dry_run:
                prompt_dir = out_dir / "prompts"
                prompt_dir.mkdir(exist_ok=True)
                for spec, b in zip(template.sections, bundles):
                    (prompt_dir / f"section-{spec.index}-{spec.id}.md").write_text(b.text, encoding="utf-8")
                print(f"wrote {len(bundles)} prompts to {prompt_dir}")
                return EXIT_OK

            provider = provider or build_provider(cfg, template)
            gateway = Gateway(
                provider,
                cfg.model_id,
                max_output_tokens=cfg.max_output_tokens,
                temperature=cfg.temperature,
                max_in_flight=cfg.jobs,
                clock=clock,
            )
            sections = generate_all(template, flat, gateway, cfg.jobs, bundles=bundles, debug_dir=out_dir / "debug")
            meta = DocumentMeta(
                title=f"{repository_name(cfg.source)} Architecture Documentation",
                model_id=cfg.model_id,
                generated_at=started.isoformat(),
            )
            doc = assemble(sections, template, meta)
            outcomes = render_all(extract_diagrams(doc.text), cfg.renderer, out_dir, jobs=cfg.jobs)
            final = substitute(doc.text, outcomes)
            doc_path = out_dir / DOCUMENT_NAME
            doc_path.write_text(final.markdown, encoding="utf-8")

            cost = accumulate_cost([c for s in sections for c in s.calls], cfg.model_id, prices)
            report = RunReport.from_sections(
                _section_stats(sections, cost),
                started_at=started.isoformat(),
                finished_at=clock.now().isoformat(),
                wall_time_ms=clock.monotonic_ms() - t0,
                model_id=cfg.model_id,
                file_count=len(entries),
                included_count=sum(e.included for e in entries),
                char_count=flat.char_count,
            )
            write_report(report, cfg.report_path or out_dir / "report.json")
            for s in sections:
                for w in s.warnings:
                    print(f"ciao: warning: section {s.index} ({s.section_id}): {w}", file=err)
            if cfg.emit_readme:
                if is_git_url(cfg.source):
                    print("ciao: warning: --emit-readme ignored for remote sources", file=err)
                else:
                    emit_readme(root, doc_path)
        return EXIT_OK
    except (UsageError, RepoNotFound, TemplateSyntax, TemplateInvalid, UnknownModelPrice) as exc:
        print(f"ciao: error: {exc}", file=err)
        return EXIT_USAGE
    except CiaoError as exc:
        print(f"ciao: error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ciao", description="Generate architecture documentation from a repository.")
    parser.add_argument("--version", action="version", version=f"ciao {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="document a local directory or a Git URL")
    g.add_argument("source", help="local repository path or Git URL")
    g.add_argument("--out", type=Path, default=Path("ciao-out"), help="output directory (default: ./ciao-out)")
    g.add_argument("--model", default=DEFAULT_MODEL, help=f"model identifier (default: {DEFAULT_MODEL})")
    g.add_argument("--template", type=Path, help="JSON documentation template")
    g.add_argument("--render", choices=("external", "server", "none"), default="external")
    g.add_argument("--renderer-cmd", default="plantuml", help="PlantUML executable (default: plantuml)")
    g.add_argument("--renderer-url", help="PlantUML server endpoint accepting POSTed source, e.g. http://host:8080/png")
    g.add_argument("--max-context-tokens", type=int, default=TokenBudget().max_input_tokens)
    g.add_argument("--jobs", type=int, default=8, help="sections generated concurrently (default: 8)")
    g.add_argument("--dry-run", action="store_true", help="write prompts to <out>/prompts and stop")
    g.add_argument("--report", type=Path, help="report path (default: <out>/report.json)")
    g.add_argument("--emit-readme", action="store_true", help="append a link to the document in the repository README")
    g.add_argument("--mock-script", type=Path, help="JSON script for the offline mock provider")
    g.add_argument("--mock", action="store_true", help="use the offline mock provider")
    g.add_argument("--prices", type=Path, help="JSON price table (USD per million tokens)")
    g.add_argument("--clock-epoch", type=int, help="freeze timestamps and durations (for reproducible output)")
    g.add_argument("--temperature", type=float, default=0.2)
    g.add_argument("--max-output-tokens", type=int, default=16_000)
    g.add_argument("--max-file-bytes", type=int, default=FilterConfig().max_file_bytes)
    g.add_argument("--exclude", action="append", default=[], metavar="GLOB", help="extra exclude pattern")
    g.add_argument("--dump-flattened", type=Path, metavar="FILE", help="also write the flattened repository here")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    filters = FilterConfig(max_file_bytes=args.max_file_bytes).with_extra_excludes(*args.exclude)
    return RunConfig(
        source=args.source,
        out_dir=args.out,
        model_id=args.model,
        template_path=args.template,
        renderer=RendererConfig(args.render, args.renderer_cmd, args.renderer_url),
        budget=TokenBudget(args.max_context_tokens),
        jobs=args.jobs,
        dry_run=args.dry_run,
        report_path=args.report,
        emit_readme=args.emit_readme,
        mock=args.mock,
        mock_script=args.mock_script,
        prices_path=args.prices,
        clock_epoch=args.clock_epoch,
        temperature=args.temperature,
        max_output_tokens=args.max_output_tokens,
        dump_flattened=args.dump_flattened,
        filters=filters,
    )


def _terminate(signum, frame):
    raise SystemExit(128 + signum)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_from_args(args)
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    # SIGTERM unwinds like Ctrl-C so temporary clones are removed
    try:
        previous = signal.signal(signal.SIGTERM, _terminate)
    except ValueError:  # not the main thread
        return run(cfg)
    try:
        return run(cfg)
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
