"""Composite prompts: global part, section part, repository context."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BudgetTooSmall
from .flatten import FlattenedRepository, file_block
from .template import DiagramKind, DocumentationTemplate, TemplateSection

PART_SEPARATOR = "\n\n"
OMISSION_MARKER = "[omitted for length: {path}]"

ANTI_INVENTION_RULE = (
    "Do not invent architectural elements: never name a component, container, module, class, file, "
    "endpoint, actor, technology or deployment node that does not appear in the repository below."
)


@dataclass(frozen=True)
class GlobalPromptConfig:
    role_line: str = (
        "You are a Meticulous Software Architect documenting an existing code base at system level."
    )
    audience: str = (
        "Your readers are developers who need a system-level view of this repository so they can "
        "work with it and evolve it."
    )
    grounding_rules: tuple[str, ...] = (
        "Ground every statement in evidence from the repository: files, directories, manifests, "
        "configuration and code.",
        ANTI_INVENTION_RULE,
        "When the repository gives no evidence for something the section asks about, state that "
        "it is not evident from the code instead of speculating.",
        "Refer to code elements by the exact names used in the repository.",
    )
    style_rules: tuple[str, ...] = (
        "Write in Markdown.",
        "Use concise, neutral technical language and consistent terminology.",
        "Prefer bullet lists and tables for enumerations.",
        "Output only the requested section, starting with its heading; no preamble or closing remarks.",
    )
    motivation: str = "Take a deep breath and work through the repository carefully; accuracy matters more than length."

    def __post_init__(self):
        if not self.role_line.strip():
            raise ValueError("role_line must not be empty")
        if not self.grounding_rules:
            raise ValueError("grounding_rules must not be empty")


@dataclass(frozen=True)
class TokenBudget:
    max_input_tokens: int = 200_000
    chars_per_token: int = 4

    def __post_init__(self):
        if self.max_input_tokens <= 0 or self.chars_per_token <= 0:
            raise ValueError("budget values must be positive")


@dataclass(frozen=True)
class PromptBundle:
    section_id: str
    global_part: str
    section_part: str
    context_part: str
    total_estimated_tokens: int

    @property
    def user_text(self) -> str:
        return self.section_part + PART_SEPARATOR + self.context_part

    @property
    def text(self) -> str:
        return self.global_part + PART_SEPARATOR + self.user_text


def estimate_tokens(text: str, chars_per_token: int = 4) -> int:
    return math.ceil(len(text) / chars_per_token)


def _bullets(items) -> str:
    return "\n".join(f"- {item}" for item in items)


def build_global_prompt(cfg: GlobalPromptConfig = GlobalPromptConfig(), guidelines: str = "") -> str:
    parts = [
        cfg.role_line,
        "## Audience\n" + cfg.audience,
        "## Grounding rules\n" + _bullets(cfg.grounding_rules),
        "## Style\n" + _bullets(cfg.style_rules),
    ]
    if guidelines:
        parts.append("## Writing guidelines\n" + guidelines)
    if cfg.motivation:
        parts.append(cfg.motivation)
    return "\n\n".join(parts)


DEFAULT_SKELETONS: dict[DiagramKind, str] = {
    DiagramKind.USE_CASE: """```plantuml
@startuml
left to right direction
actor "User" as user
rectangle "System" {
  usecase "Main use case" as UC1
}
user --> UC1
@enduml
```""",
    DiagramKind.COMPONENT: """```plantuml
@startuml
node "Container A" as A
database "Data store" as DB
A --> DB : reads/writes
@enduml
```""",
    DiagramKind.CODE_LEVEL: """```plantuml
@startuml
package "module" {
  class EntryPoint {
    +main()
  }
  class Service
}
EntryPoint --> Service
@enduml
```""",
    DiagramKind.DEPLOYMENT: """```plantuml
@startuml
node "Host" {
  artifact "app" as app
}
database "Storage" as db
app --> db
@enduml
```""",
}

_DIAGRAM_NAMES = {
    DiagramKind.USE_CASE: "use case diagram",
    DiagramKind.COMPONENT: "component diagram of the containers",
    DiagramKind.CODE_LEVEL: "code-level (class/package) diagram",
    DiagramKind.DEPLOYMENT: "deployment diagram",
}


def build_section_prompt(section: TemplateSection, few_shot: str | None = None) -> str:
    lines = [
        f"# Task: write section {section.index} of the architecture document, \"{section.title}\"",
        "",
        f"Goal of this section: {section.goal}.",
    ]
    if section.c4_level:
        lines.append(f"This section corresponds to C4 level {section.c4_level}.")
    lines += [
        "",
        "Start your answer with exactly this heading line:",
        section.heading,
    ]
    subs = section.subsection_headings()
    if subs:
        lines += ["", "Include these subsections, with these exact headings:"]
        lines += subs
    if section.diagram is not None:
        lines += [
            "",
            f"Under {section.diagram_slot}, provide a {_DIAGRAM_NAMES[section.diagram]} as PlantUML source "
            "in a fenced code block labeled `plantuml`. The block must start with `@startuml` and end "
            "with `@enduml`. Only include elements that exist in the repository.",
        ]
    if few_shot:
        lines += ["", "Follow the structure of this skeleton, replacing placeholders with repository facts:", few_shot]
    return "\n".join(lines)


def apply_budget(flat: FlattenedRepository, fixed_overhead_tokens: int, budget: TokenBudget) -> str:
    """Fit the flattened repository into what is left of the budget.

    File blocks are replaced by omission markers, largest first; files in
    ``flat.priority_paths`` go last. The structure tree is never dropped: if
    tree plus markers cannot fit, ``BudgetTooSmall`` is raised.
    """
    if fixed_overhead_tokens < 0:
        raise ValueError("fixed_overhead_tokens must be >= 0")
    cpt = budget.chars_per_token
    limit = budget.max_input_tokens - fixed_overhead_tokens

    blocks = {p: file_block(p, c) for p, c in flat.file_blocks}
    markers = {p: OMISSION_MARKER.format(path=p) + "\n\n" for p in blocks}
    base = len(flat.header) + len(flat.structure_block)
    size = base + sum(len(b) for b in blocks.values())
    if math.ceil(size / cpt) <= limit:
        return flat.text

    floor = base + sum(len(m) for m in markers.values())
    if math.ceil(floor / cpt) > limit:
        raise BudgetTooSmall(
            f"structure tree and omission markers need {math.ceil(floor / cpt)} tokens, "
            f"only {max(limit, 0)} available"
        )

    drop_order = sorted(
        blocks,
        key=lambda p: (p in flat.priority_paths, -len(blocks[p]), p.encode("utf-8")),
    )
    dropped: set[str] = set()
    for p in drop_order:
        if math.ceil(size / cpt) <= limit:
            break
        size += len(markers[p]) - len(blocks[p])
        dropped.add(p)

    parts = [flat.header, flat.structure_block]
    parts += [markers[p] if p in dropped else blocks[p] for p, _ in flat.file_blocks]
    return "".join(parts)


def build_bundle(
    section: TemplateSection,
    global_cfg: GlobalPromptConfig,
    flat: FlattenedRepository,
    budget: TokenBudget = TokenBudget(),
    guidelines: str = "",
    few_shot: str | None = None,
) -> PromptBundle:
    global_part = build_global_prompt(global_cfg, guidelines)
    if few_shot is None and section.diagram is not None:
        few_shot = DEFAULT_SKELETONS[section.diagram]
    section_part = build_section_prompt(section, few_shot)
    overhead = estimate_tokens(global_part + PART_SEPARATOR + section_part + PART_SEPARATOR, budget.chars_per_token)
    context = apply_budget(flat, overhead, budget)
    bundle = PromptBundle(section.id, global_part, section_part, context, 0)
    total = estimate_tokens(bundle.text, budget.chars_per_token)
    return PromptBundle(section.id, global_part, section_part, context, total)


def build_all_bundles(
    template: DocumentationTemplate,
    flat: FlattenedRepository,
    global_cfg: GlobalPromptConfig = GlobalPromptConfig(),
    budget: TokenBudget = TokenBudget(),
) -> list[PromptBundle]:
    return [build_bundle(s, global_cfg, flat, budget, template.writing_guidelines) for s in template.sections]
