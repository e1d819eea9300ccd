"""Parallel section generation, shape checks, one-shot repair, assembly."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .diagrams import iter_fences
from .errors import DuplicateSection, MissingSection, SectionGenerationFailed
from .flatten import FlattenedRepository
from .llm import Gateway
from .prompts import DEFAULT_SKELETONS, GlobalPromptConfig, PromptBundle, TokenBudget, build_all_bundles
from .template import DocumentationTemplate, TemplateSection

logger = logging.getLogger(__name__)

MISSING_HEADING = "missing-heading"
MISSING_SUBSECTION = "missing-subsection"
MISSING_DIAGRAM = "missing-diagram"
MALFORMED_DIAGRAM = "malformed-diagram"


@dataclass(frozen=True)
class GeneratedSection:
    section_id: str
    index: int
    markdown: str
    usage: tuple[int, int]  # input, output tokens over every call for this section
    duration_ms: int
    warnings: tuple[str, ...] = ()
    calls: tuple[tuple[str, int, int], ...] = ()

    def __post_init__(self):
        if not self.markdown.strip():
            raise ValueError(f"section {self.section_id}: empty markdown")


_WRAPPED = re.compile(r"\A(`{3,}|~{3,})[ \t]*(?:markdown|md)?[ \t]*\n(.*)\n\1[ \t]*\Z", re.S | re.I)


def normalize_markdown(text: str) -> str:
    """Trim whitespace and unwrap a whole-answer ```markdown fence."""
    text = text.strip()
    m = _WRAPPED.match(text)
    if m:
        text = m.group(2).strip()
    return text + "\n"


def validate_section(gs: GeneratedSection, spec: TemplateSection) -> list[str]:
    lines = {ln.rstrip() for ln in gs.markdown.splitlines()}
    warnings: list[str] = []
    if spec.heading not in lines:
        warnings.append(MISSING_HEADING)
    if any(h not in lines for h in spec.subsection_headings()):
        warnings.append(MISSING_SUBSECTION)
    diagrams = [f for f in iter_fences(gs.markdown) if f.info in ("plantuml", "puml")]
    if spec.diagram is not None and not diagrams:
        warnings.append(MISSING_DIAGRAM)
    if any("@startuml" not in f.body or "@enduml" not in f.body for f in diagrams):
        warnings.append(MALFORMED_DIAGRAM)
    return warnings


def repair_instruction(spec: TemplateSection, warnings: Sequence[str]) -> str:
    rules = {
        MISSING_HEADING: f"The answer must start with the exact heading line `{spec.heading}`.",
        MISSING_SUBSECTION: "The answer must contain these exact subsection headings: "
        + ", ".join(f"`{h}`" for h in spec.subsection_headings())
        + ".",
        MISSING_DIAGRAM: f"The answer must contain a PlantUML diagram under {spec.diagram_slot}, "
        "in a fenced code block labeled `plantuml`.",
        MALFORMED_DIAGRAM: "Every `plantuml` fenced block must start with `@startuml` and end with `@enduml`.",
    }
    lines = ["Your previous answer for this section broke these rules:"]
    lines += [f"- {rules[w]}" for w in warnings]
    lines.append("Write the complete section again, following every rule.")
    return "\n".join(lines)


def _call(gateway: Gateway, bundle: PromptBundle, label: str, user_text: str | None = None):
    req = gateway.request(bundle.global_part, user_text if user_text is not None else bundle.user_text, label)
    return gateway.complete(req)


def regenerate_if_invalid(
    gs: GeneratedSection, spec: TemplateSection, gateway: Gateway, bundle: PromptBundle
) -> GeneratedSection:
    """At most one repair call; the repaired text is kept whatever its shape."""
    warnings = validate_section(gs, spec)
    if not warnings:
        return replace(gs, warnings=())
    logger.info("section %s: %s; requesting one repair", spec.id, ", ".join(warnings))
    result = _call(gateway, bundle, spec.id, bundle.user_text + "\n\n" + repair_instruction(spec, warnings))
    repaired = GeneratedSection(
        section_id=gs.section_id,
        index=gs.index,
        markdown=normalize_markdown(result.text),
        usage=(gs.usage[0] + result.input_tokens, gs.usage[1] + result.output_tokens),
        duration_ms=gs.duration_ms + result.latency_ms,
        calls=gs.calls + ((f"{spec.id}:repair", result.input_tokens, result.output_tokens),),
    )
    return replace(repaired, warnings=tuple(validate_section(repaired, spec)))


def generate_section(spec: TemplateSection, bundle: PromptBundle, gateway: Gateway) -> GeneratedSection:
    result = _call(gateway, bundle, spec.id)
    gs = GeneratedSection(
        section_id=spec.id,
        index=spec.index,
        markdown=normalize_markdown(result.text),
        usage=(result.input_tokens, result.output_tokens),
        duration_ms=result.latency_ms,
        calls=((spec.id, result.input_tokens, result.output_tokens),),
    )
    return regenerate_if_invalid(gs, spec, gateway, bundle)


def debug_file_name(gs: GeneratedSection) -> str:
    return f"section-{gs.index}-{gs.section_id}.md"


def generate_all(
    template: DocumentationTemplate,
    flat: FlattenedRepository,
    gateway: Gateway,
    jobs: int = 8,
    *,
    global_cfg: GlobalPromptConfig = GlobalPromptConfig(),
    budget: TokenBudget = TokenBudget(),
    bundles: Sequence[PromptBundle] | None = None,
    debug_dir: str | Path | None = None,
) -> list[GeneratedSection]:
    """Generate every section with at most ``jobs`` sections in flight.

    Results come back in template order. If any section fails after the
    gateway's retries, the sections that did succeed are written to
    ``debug_dir`` and ``SectionGenerationFailed`` is raised.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if bundles is None:
        bundles = build_all_bundles(template, flat, global_cfg, budget)

    with ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="ciao-section") as pool:
        futures = [pool.submit(generate_section, s, b, gateway) for s, b in zip(template.sections, bundles)]
        done: list[GeneratedSection] = []
        failed: list[tuple[TemplateSection, BaseException]] = []
        for spec, fut in zip(template.sections, futures):
            try:
                done.append(fut.result())
            except Exception as exc:  # reported below, after every section has finished
                failed.append((spec, exc))

    if failed:
        if debug_dir is not None:
            debug = Path(debug_dir)
            debug.mkdir(parents=True, exist_ok=True)
            for gs in done:
                (debug / debug_file_name(gs)).write_text(gs.markdown, encoding="utf-8")
        for spec, exc in failed[1:]:
            logger.error("section %s also failed: %s", spec.id, exc)
        spec, exc = failed[0]
        raise SectionGenerationFailed(spec.id, exc) from exc
    return done


@dataclass(frozen=True)
class DocumentMeta:
    title: str
    model_id: str
    generated_at: str
    tool_version: str = __version__


@dataclass(frozen=True)
class IntermediateDocument:
    meta: DocumentMeta
    sections: tuple[GeneratedSection, ...] = field(default=())

    @property
    def text(self) -> str:
        m = self.meta
        head = (
            f"# {m.title}\n\n"
            f"> Generated by ciao {m.tool_version} using model `{m.model_id}` on {m.generated_at}.\n"
            "> Derived automatically from the repository source; review before relying on it.\n\n"
            "---\n\n"
        )
        bodies = "\n---\n\n".join(s.markdown for s in self.sections)
        footer = f"\n---\n\n<sub>ciao {m.tool_version} | {m.model_id} | {m.generated_at}</sub>\n"
        return head + bodies + footer


def assemble(sections: Sequence[GeneratedSection], template: DocumentationTemplate, meta: DocumentMeta) -> IntermediateDocument:
    by_index: dict[int, GeneratedSection] = {}
    for gs in sections:
        if gs.index in by_index:
            raise DuplicateSection(gs.index)
        by_index[gs.index] = gs
    for spec in template.sections:
        if spec.index not in by_index:
            raise MissingSection(spec.index)
    known = {s.index for s in template.sections}
    extra = sorted(set(by_index) - known)
    if extra:
        raise ValueError(f"sections {extra} are not in the template")
    return IntermediateDocument(meta, tuple(by_index[s.index] for s in sorted(template.sections, key=lambda s: s.index)))


def mock_section_text(spec: TemplateSection) -> str:
    """Well-formed placeholder section used by the offline mock provider."""
    lines = [
        spec.heading,
        "",
        f"Offline placeholder for {spec.title.lower()}: {spec.goal}.",
    ]
    for k, heading in enumerate(spec.subsection_headings(), start=1):
        lines += ["", heading, ""]
        if k == 1 and spec.diagram is not None:
            lines.append(DEFAULT_SKELETONS[spec.diagram])
    return "\n".join(lines) + "\n"
