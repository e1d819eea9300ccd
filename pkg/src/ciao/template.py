"""The eight-section architecture documentation template.

Templates can be loaded from JSON. Schema::

    {
      "writing_guidelines": "<prose>",
      "sections": [
        {
          "index": 1,                      # 1-based, contiguous
          "id": "system-overview",         # unique slug
          "title": "System Overview",
          "goal": "<what the section must cover>",
          "c4_level": null | "L1" | "L2" | "L3" | "L4",
          "diagram": null | "UseCase" | "Component" | "CodeLevel" | "Deployment",
          "subsection_titles": ["..."]     # subsection k is numbered <index>.<k>
        }
      ]
    }

A section with a diagram renders it under its first subsection (``<index>.1``).
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass

from .errors import TemplateInvalid, TemplateSyntax

C4_LEVELS = ("L1", "L2", "L3", "L4")
_SLUG = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")


class DiagramKind(str, enum.Enum):
    USE_CASE = "UseCase"
    COMPONENT = "Component"
    CODE_LEVEL = "CodeLevel"
    DEPLOYMENT = "Deployment"


@dataclass(frozen=True)
class TemplateSection:
    index: int
    id: str
    title: str
    goal: str
    c4_level: str | None = None
    diagram: DiagramKind | None = None
    subsection_titles: tuple[str, ...] = ()

    @property
    def heading(self) -> str:
        return f"## {self.index}. {self.title}"

    def subsection_headings(self) -> list[str]:
        return [f"### {self.index}.{k} {title}" for k, title in enumerate(self.subsection_titles, start=1)]

    @property
    def diagram_slot(self) -> str | None:
        """Subsection number holding the diagram, e.g. ``"3.1"``."""
        return f"{self.index}.1" if self.diagram is not None else None


@dataclass(frozen=True)
class DocumentationTemplate:
    sections: tuple[TemplateSection, ...]
    writing_guidelines: str = ""

    def by_id(self, section_id: str) -> TemplateSection:
        for s in self.sections:
            if s.id == section_id:
                return s
        raise KeyError(section_id)

    def by_index(self, index: int) -> TemplateSection:
        for s in self.sections:
            if s.index == index:
                return s
        raise KeyError(index)


DEFAULT_WRITING_GUIDELINES = (
    "Write for developers who need a consolidated, system-level understanding of the repository "
    "in order to work with and evolve it. Use precise, neutral technical language and consistent "
    "terminology across sections. Base every statement on evidence in the repository; when the "
    "code does not show something, say so instead of guessing. Prefer short paragraphs, bullet "
    "lists and tables over long prose."
)


def default_template() -> DocumentationTemplate:
    s = TemplateSection
    return DocumentationTemplate(
        sections=(
            s(1, "system-overview", "System Overview", "purpose, scope, and main responsibilities"),
            s(
                2,
                "architectural-context",
                "Architectural Context",
                "actors, interacting systems, APIs, and data sources",
                "L1",
                DiagramKind.USE_CASE,
                ("Use Case Diagram",),
            ),
            s(
                3,
                "containers",
                "Containers",
                "applications and data stores",
                "L2",
                DiagramKind.COMPONENT,
                ("Component Diagram",),
            ),
            s(4, "components", "Components", "modules, packages, or classes", "L3"),
            s(
                5,
                "code-level",
                "Code-Level",
                "directories, files, entry points",
                "L4",
                DiagramKind.CODE_LEVEL,
                ("Code-Level Diagram",),
            ),
            s(6, "cross-cutting-concerns", "Cross-Cutting Concerns", "security, configuration, logging, testing"),
            s(
                7,
                "quality-attributes",
                "Quality Attributes and Rationale",
                "performance, maintainability, scalability, security",
            ),
            s(
                8,
                "deployment",
                "Deployment",
                "Dockerfiles and configuration files",
                None,
                DiagramKind.DEPLOYMENT,
                ("Deployment Diagram",),
            ),
        ),
        writing_guidelines=DEFAULT_WRITING_GUIDELINES,
    )


def validate_template(t: DocumentationTemplate) -> list[str]:
    """Return human-readable violations; an empty list means valid."""
    problems: list[str] = []
    if not t.sections:
        return ["no sections"]

    indexes = [s.index for s in t.sections]
    seen: set[int] = set()
    for i in indexes:
        if i in seen:
            problems.append(f"duplicate index {i}")
        seen.add(i)
    if sorted(seen) != list(range(1, len(seen) + 1)):
        problems.append(f"indexes must be contiguous from 1, got {sorted(seen)}")

    ids: set[str] = set()
    for s in t.sections:
        if s.id in ids:
            problems.append(f"duplicate id {s.id!r}")
        ids.add(s.id)
        if not _SLUG.match(s.id):
            problems.append(f"section {s.index}: id {s.id!r} is not a slug")
        if not s.title.strip():
            problems.append(f"section {s.index}: empty title")
        if not s.goal.strip():
            problems.append(f"section {s.index}: empty goal")
        if s.c4_level is not None and s.c4_level not in C4_LEVELS:
            problems.append(f"section {s.index}: unknown c4_level {s.c4_level!r}")
        if s.diagram is not None and not s.subsection_titles:
            problems.append(f"section {s.index}: diagram {s.diagram.value} has no subsection slot {s.index}.1")
    return problems


def template_to_dict(t: DocumentationTemplate) -> dict:
    return {
        "writing_guidelines": t.writing_guidelines,
        "sections": [
            {
                "index": s.index,
                "id": s.id,
                "title": s.title,
                "goal": s.goal,
                "c4_level": s.c4_level,
                "diagram": s.diagram.value if s.diagram else None,
                "subsection_titles": list(s.subsection_titles),
            }
            for s in t.sections
        ],
    }


def serialize_template(t: DocumentationTemplate) -> str:
    return json.dumps(template_to_dict(t), indent=2, ensure_ascii=False) + "\n"


def _section_from_dict(raw: dict, position: int) -> TemplateSection:
    if not isinstance(raw, dict):
        raise TemplateInvalid([f"sections[{position}] is not an object"])
    missing = [k for k in ("index", "id", "title", "goal") if k not in raw]
    if missing:
        raise TemplateInvalid([f"sections[{position}] missing {', '.join(missing)}"])
    diagram = raw.get("diagram")
    if diagram is not None:
        try:
            diagram = DiagramKind(diagram)
        except ValueError:
            raise TemplateInvalid([f"sections[{position}]: unknown diagram kind {diagram!r}"]) from None
    index = raw["index"]
    if not isinstance(index, int) or isinstance(index, bool):
        raise TemplateInvalid([f"sections[{position}]: index must be an integer"])
    return TemplateSection(
        index=index,
        id=str(raw["id"]),
        title=str(raw["title"]),
        goal=str(raw["goal"]),
        c4_level=raw.get("c4_level"),
        diagram=diagram,
        subsection_titles=tuple(str(x) for x in raw.get("subsection_titles", ())),
    )


def parse_template(text: str) -> DocumentationTemplate:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TemplateSyntax(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(raw, dict) or not isinstance(raw.get("sections"), list):
        raise TemplateInvalid(["top level must be an object with a 'sections' array"])
    t = DocumentationTemplate(
        sections=tuple(_section_from_dict(s, i) for i, s in enumerate(raw["sections"])),
        writing_guidelines=str(raw.get("writing_guidelines", "")),
    )
    problems = validate_template(t)
    if problems:
        raise TemplateInvalid(problems)
    return t
