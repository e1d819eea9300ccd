import dataclasses
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ciao.errors import TemplateInvalid, TemplateSyntax
from ciao.template import (
    DiagramKind,
    DocumentationTemplate,
    TemplateSection,
    default_template,
    parse_template,
    serialize_template,
    template_to_dict,
    validate_template,
)
from conftest import GOLDEN

# frozen independently of ciao.template
EXPECTED_TITLES = [
    "System Overview",
    "Architectural Context",
    "Containers",
    "Components",
    "Code-Level",
    "Cross-Cutting Concerns",
    "Quality Attributes and Rationale",
    "Deployment",
]
EXPECTED_C4 = [None, "L1", "L2", "L3", "L4", None, None, None]
EXPECTED_SLOTS = {"2.1": "Use Case Diagram", "3.1": "Component Diagram", "5.1": "Code-Level Diagram", "8.1": "Deployment Diagram"}


def test_default_template_matches_golden_file():
    assert serialize_template(default_template()) == (GOLDEN / "default_template.json").read_text(encoding="utf-8")


def test_default_template_structure():
    t = default_template()
    assert [s.title for s in t.sections] == EXPECTED_TITLES
    assert [s.c4_level for s in t.sections] == EXPECTED_C4
    assert [s.index for s in t.sections] == list(range(1, 9))
    slots = {s.diagram_slot: s.subsection_titles[0] for s in t.sections if s.diagram}
    assert slots == EXPECTED_SLOTS
    assert {s.index for s in t.sections if s.diagram} == {2, 3, 5, 8}


def test_default_goals():
    t = default_template()
    assert t.by_index(2).goal == "actors, interacting systems, APIs, and data sources"
    assert t.by_index(3).goal == "applications and data stores"
    assert t.by_id("deployment").diagram is DiagramKind.DEPLOYMENT


def test_headings():
    s = default_template().by_index(5)
    assert s.heading == "## 5. Code-Level"
    assert s.subsection_headings() == ["### 5.1 Code-Level Diagram"]
    assert default_template().by_index(1).diagram_slot is None


def test_default_is_valid():
    assert validate_template(default_template()) == []


def test_round_trip_default():
    t = default_template()
    assert parse_template(serialize_template(t)) == t


def test_parse_duplicate_index():
    raw = template_to_dict(default_template())
    raw["sections"][3]["index"] = 3
    with pytest.raises(TemplateInvalid) as exc:
        parse_template(json.dumps(raw))
    assert any("duplicate index 3" in v for v in exc.value.violations)


def test_parse_empty_sections():
    with pytest.raises(TemplateInvalid) as exc:
        parse_template('{"sections": []}')
    assert exc.value.violations == ["no sections"]


def test_parse_syntax_error_has_position():
    with pytest.raises(TemplateSyntax) as exc:
        parse_template('{"sections": [\n  {"index": 1,}\n]}')
    assert exc.value.line == 2


@pytest.mark.parametrize(
    "patch",
    [
        {"diagram": "Flowchart"},
        {"index": "1"},
    ],
)
def test_parse_bad_field_types(patch):
    raw = template_to_dict(default_template())
    raw["sections"][0].update(patch)
    with pytest.raises(TemplateInvalid):
        parse_template(json.dumps(raw))


def test_parse_rejects_non_object():
    with pytest.raises(TemplateInvalid):
        parse_template("[]")


def _replace(t: DocumentationTemplate, at: int, **changes) -> DocumentationTemplate:
    sections = tuple(dataclasses.replace(s, **changes) if s.index == at else s for s in t.sections)
    return dataclasses.replace(t, sections=sections)


def test_empty_goal_names_section():
    problems = validate_template(_replace(default_template(), 4, goal=""))
    assert len(problems) == 1 and "section 4" in problems[0]


def test_diagram_without_slot():
    problems = validate_template(_replace(default_template(), 2, subsection_titles=()))
    assert len(problems) == 1 and "2.1" in problems[0]


def test_non_contiguous_and_duplicate_id():
    t = default_template()
    assert validate_template(_replace(t, 8, index=9))
    assert validate_template(_replace(t, 8, id="containers")) == ["duplicate id 'containers'"]


_slug = st.from_regex(r"[a-z0-9]{1,6}(-[a-z0-9]{1,4}){0,2}", fullmatch=True)
_text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=20).filter(str.strip)


@st.composite
def _templates(draw):
    n = draw(st.integers(1, 10))
    ids = draw(st.lists(_slug, min_size=n, max_size=n, unique=True))
    sections = []
    for i, sid in enumerate(ids, start=1):
        diagram = draw(st.none() | st.sampled_from(list(DiagramKind)))
        subs = draw(st.lists(_text, min_size=1 if diagram else 0, max_size=3))
        sections.append(TemplateSection(
            i, sid, draw(_text), draw(_text), draw(st.sampled_from([None, "L1", "L2", "L3", "L4"])), diagram, tuple(subs),
        ))
    return DocumentationTemplate(tuple(sections), draw(st.text(max_size=40)))


@given(_templates())
def test_round_trip_property(t):
    assert validate_template(t) == []
    assert parse_template(serialize_template(t)) == t
