"""Find PlantUML blocks in Markdown, render them, and swap in image links."""

from __future__ import annotations

import logging
import re
import shlex
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import httpx

from .errors import SpanMismatch

logger = logging.getLogger(__name__)

IMAGES_DIR = "images"

RENDERED = "rendered"
PASSTHROUGH = "passthrough"
INVALID = "invalid"

_FENCE = re.compile(r"^ {0,3}(`{3,}|~{3,})(.*)$")
_SECTION_HEADING = re.compile(r"^## (\d+)\.")


@dataclass(frozen=True)
class Fence:
    info: str  # first word of the info string, lower-cased
    start: int  # offset of the opening fence line
    end: int  # offset just past the closing fence (before its newline)
    body: str
    section_index: int


def iter_fences(text: str) -> Iterator[Fence]:
    """Yield fenced code blocks in document order.

    Follows CommonMark closely enough for generated documents: the closing
    fence uses the same character, is at least as long and has no info
    string. An unclosed fence runs to the end of the text.
    """
    section = 0
    pos = 0
    lines = text.splitlines(keepends=True)
    i = 0
    while i < len(lines):
        line = lines[i]
        stripped = line.rstrip("\n")
        m = _FENCE.match(stripped)
        if m is None or (m.group(1)[0] == "`" and "`" in m.group(2)):
            h = _SECTION_HEADING.match(stripped)
            if h:
                section = int(h.group(1))
            pos += len(line)
            i += 1
            continue
        marker = m.group(1)
        info = m.group(2).strip().split(maxsplit=1)
        start = pos
        pos += len(line)
        body_lines: list[str] = []
        end = None
        i += 1
        while i < len(lines):
            inner = lines[i]
            close = _FENCE.match(inner.rstrip("\n"))
            if close and close.group(1)[0] == marker[0] and len(close.group(1)) >= len(marker) and not close.group(2).strip():
                end = pos + len(inner.rstrip("\n"))
                pos += len(inner)
                i += 1
                break
            body_lines.append(inner)
            pos += len(inner)
            i += 1
        if end is None:
            end = len(text.rstrip("\n")) if text.rstrip("\n") else len(text)
            end = max(end, start)
        yield Fence(info[0].lower() if info else "", start, end, "".join(body_lines), section)


@dataclass(frozen=True)
class DiagramBlock:
    section_index: int
    ordinal: int
    source: str
    span: tuple[int, int]

    @property
    def image_name(self) -> str:
        return f"section-{self.section_index}-diagram-{self.ordinal}.png"

    @property
    def image_path(self) -> str:
        return f"{IMAGES_DIR}/{self.image_name}"


def _diagram_source(body: str) -> str:
    lines = body.splitlines()
    starts = [k for k, ln in enumerate(lines) if ln.strip().startswith("@startuml")]
    if not starts:
        return body.strip()
    first = starts[0]
    for k in range(first + 1, len(lines)):
        if lines[k].strip().startswith("@enduml"):
            return "\n".join(lines[first : k + 1]).strip()
    return "\n".join(lines[first:]).strip()


def extract_diagrams(doc, warnings: list[str] | None = None) -> list[DiagramBlock]:
    """PlantUML blocks from fences labeled ``plantuml``, in document order."""
    text = getattr(doc, "text", doc)
    blocks: list[DiagramBlock] = []
    counts: dict[int, int] = {}
    covered: list[tuple[int, int]] = []
    for fence in iter_fences(text):
        covered.append((fence.start, fence.end))
        if fence.info not in ("plantuml", "puml"):
            continue
        k = counts.get(fence.section_index, 0)
        counts[fence.section_index] = k + 1
        blocks.append(DiagramBlock(fence.section_index, k, _diagram_source(fence.body), (fence.start, fence.end)))

    for m in re.finditer(r"(?m)^[ \t]*@startuml", text):
        if not any(a <= m.start() < b for a, b in covered):
            msg = f"@startuml outside a plantuml fence at offset {m.start()} ignored"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
    return blocks


_PAIRS = {")": "(", "]": "[", "}": "{"}


def validate_diagram(block: DiagramBlock) -> str | None:
    """Return ``None`` when the block looks renderable, else a reason tag."""
    lines = [ln.strip() for ln in block.source.strip().splitlines()]
    if not lines or not lines[0].startswith("@startuml"):
        return "missing-startuml"
    if len(lines) < 2 or not lines[-1].startswith("@enduml"):
        return "unterminated"
    body = [ln for ln in lines[1:-1] if ln and not ln.startswith("'")]
    if not body:
        return "empty-body"

    stack: list[str] = []
    for ln in body:
        in_quote = False
        for ch in ln:
            if ch == '"':
                in_quote = not in_quote
            elif in_quote:
                continue
            elif ch in "([{":
                stack.append(ch)
            elif ch in _PAIRS:
                if not stack or stack.pop() != _PAIRS[ch]:
                    return "unbalanced-delimiters"
    if stack:
        return "unbalanced-delimiters"
    return None


@dataclass(frozen=True)
class RendererConfig:
    mode: str = "none"  # external | server | none
    command: str = "plantuml"
    url: str | None = None
    timeout_s: float = 120.0

    def __post_init__(self):
        if self.mode not in ("external", "server", "none"):
            raise ValueError(f"unknown render mode {self.mode!r}")


@dataclass(frozen=True)
class RenderOutcome:
    block: DiagramBlock
    status: str
    image: str | None = None
    reason: str | None = None


def _passthrough(block: DiagramBlock, reason: str) -> RenderOutcome:
    logger.info("diagram %s left as source: %s", block.image_name, reason)
    return RenderOutcome(block, PASSTHROUGH, reason=reason)


def _render_external(block: DiagramBlock, cfg: RendererConfig, images_dir: Path) -> RenderOutcome:
    argv = shlex.split(cfg.command)
    if not argv or shutil.which(argv[0]) is None:
        return _passthrough(block, "renderer-unavailable")
    with tempfile.TemporaryDirectory(prefix="ciao-uml-") as tmp:
        src = Path(tmp) / block.image_name.replace(".png", ".puml")
        src.write_text(block.source + "\n", encoding="utf-8")
        try:
            proc = subprocess.run(argv + ["-tpng", str(src)], capture_output=True, text=True, timeout=cfg.timeout_s)
        except FileNotFoundError:
            return _passthrough(block, "renderer-unavailable")
        except subprocess.TimeoutExpired:
            return _passthrough(block, "renderer-timeout")
        produced = src.with_suffix(".png")
        if proc.returncode != 0:
            detail = (proc.stderr or proc.stdout).strip().splitlines()[:1]
            return _passthrough(block, "renderer-failed" + (f": {detail[0]}" if detail else ""))
        if not produced.is_file() or produced.stat().st_size == 0:
            return _passthrough(block, "renderer-failed: no image produced")
        images_dir.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(produced, images_dir / block.image_name)
    return RenderOutcome(block, RENDERED, image=block.image_path)


def _render_server(block: DiagramBlock, cfg: RendererConfig, images_dir: Path, client: httpx.Client | None) -> RenderOutcome:
    if not cfg.url:
        return _passthrough(block, "renderer-unavailable")
    own = client is None
    client = client or httpx.Client(timeout=cfg.timeout_s)
    try:
        resp = client.post(cfg.url, content=block.source.encode("utf-8"), headers={"Content-Type": "text/plain"})
    except httpx.HTTPError:
        return _passthrough(block, "renderer-unavailable")
    finally:
        if own:
            client.close()
    if resp.status_code != 200 or not resp.content:
        return _passthrough(block, f"renderer-failed: HTTP {resp.status_code}")
    images_dir.mkdir(parents=True, exist_ok=True)
    (images_dir / block.image_name).write_bytes(resp.content)
    return RenderOutcome(block, RENDERED, image=block.image_path)


def render(block: DiagramBlock, cfg: RendererConfig, out_dir: str | Path, client: httpx.Client | None = None) -> RenderOutcome:
    """Render one validated block; every failure degrades to passthrough."""
    images_dir = Path(out_dir) / IMAGES_DIR
    if cfg.mode == "none":
        return _passthrough(block, "rendering-disabled")
    try:
        if cfg.mode == "external":
            return _render_external(block, cfg, images_dir)
        return _render_server(block, cfg, images_dir, client)
    except OSError as exc:
        return _passthrough(block, f"renderer-failed: {exc}")


def render_all(
    blocks: Iterable[DiagramBlock],
    cfg: RendererConfig,
    out_dir: str | Path,
    jobs: int = 1,
    client: httpx.Client | None = None,
) -> list[RenderOutcome]:
    def one(block: DiagramBlock) -> RenderOutcome:
        reason = validate_diagram(block)
        if reason is not None:
            return RenderOutcome(block, INVALID, reason=reason)
        return render(block, cfg, out_dir, client)

    blocks = list(blocks)
    if jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, blocks))
    return [one(b) for b in blocks]


@dataclass(frozen=True)
class ArchitectureDocument:
    markdown: str
    images: tuple[str, ...] = ()


def annotation(outcome: RenderOutcome) -> str:
    label = "diagram invalid" if outcome.status == INVALID else "diagram not rendered"
    return f"<!-- {label}: {outcome.reason} -->\n"


def substitute(doc, outcomes: Iterable[RenderOutcome]) -> ArchitectureDocument:
    """Replace rendered fences by image links and annotate the rest.

    Edits are applied in descending span order; text outside the replaced
    spans is untouched.
    """
    text = getattr(doc, "text", doc)
    ordered = sorted(outcomes, key=lambda o: o.block.span)
    prev_end = -1
    for o in ordered:
        start, end = o.block.span
        if start < prev_end or not (0 <= start <= end <= len(text)):
            raise SpanMismatch(f"bad span {o.block.span} for {o.block.image_name}")
        prev_end = end
        chunk = text[start:end]
        if not (chunk.lstrip(" ").startswith(("```", "~~~")) and o.block.source.strip() in chunk):
            raise SpanMismatch(f"span {o.block.span} does not hold {o.block.image_name}")

    images = []
    for o in reversed(ordered):
        start, end = o.block.span
        if o.status == RENDERED:
            b = o.block
            alt = f"Section {b.section_index} diagram" + (f" {b.ordinal + 1}" if b.ordinal else "")
            text = text[:start] + f"![{alt}]({o.image})" + text[end:]
            images.append(o.image)
        else:
            text = text[:start] + annotation(o) + text[start:]
    return ArchitectureDocument(text, tuple(sorted(images)))
