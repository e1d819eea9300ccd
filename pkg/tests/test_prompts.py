import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ciao.errors import BudgetTooSmall
from ciao.flatten import FileEntry, build_structure_tree, file_block, render_flattened
from ciao.languages import PYTHON
from ciao.prompts import (
    ANTI_INVENTION_RULE,
    DEFAULT_SKELETONS,
    PART_SEPARATOR,
    GlobalPromptConfig,
    TokenBudget,
    apply_budget,
    build_all_bundles,
    build_bundle,
    build_global_prompt,
    build_section_prompt,
    estimate_tokens,
)
from ciao.template import DiagramKind, default_template
from oracles import ceil_div

MARKER = re.compile(r"^\[omitted for length: (.+)\]$", re.M)


def make_flat(contents: dict[str, str], keep=()):
    entries = [FileEntry(p, PYTHON, len(c), c) for p, c in contents.items()]
    tree = build_structure_tree(list(contents))
    return render_flattened(tree, entries, always_keep_names=keep)


def budget_fixture():
    """Three files whose serialization is exactly 8000 chars (2000 tokens)."""
    sizes = {"a.py": 4000, "b.py": 2000}
    probe = make_flat({"a.py": "", "b.py": "", "c.py": ""})
    # each content adds its own length; non-empty content also needs a trailing newline we include
    c_len = 8000 - probe.char_count - sum(sizes.values())
    contents = {p: "x" * (n - 1) + "\n" for p, n in sizes.items()}
    contents["c.py"] = "y" * (c_len - 1) + "\n"
    return make_flat(contents)


def kept_files(context: str, flat) -> set[str]:
    omitted = set(MARKER.findall(context))
    return {p for p, _ in flat.file_blocks} - omitted


def test_estimate_tokens():
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcde") == 2
    assert estimate_tokens("abcdefg", 3) == 3


@given(st.text(max_size=200), st.integers(1, 9))
def test_estimate_tokens_is_ceiling(text, cpt):
    assert estimate_tokens(text, cpt) == ceil_div(len(text), cpt)


def test_budget_fixture_size():
    flat = budget_fixture()
    assert flat.char_count == len(flat.text) == 8000
    assert flat.estimated_tokens == 2000


def test_within_budget_unchanged():
    flat = make_flat({"a.py": "x = 1\n"})
    assert apply_budget(flat, 0, TokenBudget(1000)) == flat.text


@pytest.mark.parametrize("budget", [50, 500, 5000])
def test_budget_levels(budget):
    flat = budget_fixture()
    out = apply_budget(flat, 0, TokenBudget(budget))
    assert ceil_div(len(out), 4) <= budget
    truncated = flat.estimated_tokens > budget
    assert bool(MARKER.search(out)) is truncated
    assert out.startswith(flat.header + flat.structure_block)


def test_budget_levels_monotone():
    flat = budget_fixture()
    kept = [kept_files(apply_budget(flat, 0, TokenBudget(b)), flat) for b in (50, 500, 5000)]
    assert kept[0] <= kept[1] <= kept[2]
    assert kept[0] == set()
    assert kept[1] == {"c.py"}
    assert kept[2] == {"a.py", "b.py", "c.py"}


def test_single_large_file_dropped():
    big = "z" * (36000 - 1) + "\n"  # 9000 tokens on its own
    flat = make_flat({"big.py": big, "small.py": "s = 1\n", "util.py": "u = 2\n"})
    out = apply_budget(flat, 0, TokenBudget(1000))
    expected = flat.text.replace(file_block("big.py", big), "[omitted for length: big.py]\n\n")
    assert out == expected
    assert MARKER.findall(out) == ["big.py"]


def test_budget_too_small():
    flat = make_flat({"a.py": "x = 1\n"})
    with pytest.raises(BudgetTooSmall):
        apply_budget(flat, 0, TokenBudget(1))
    with pytest.raises(BudgetTooSmall):
        apply_budget(flat, 10_000, TokenBudget(10_000))


def test_priority_files_dropped_last():
    flat = make_flat({"Dockerfile": "F" * 3999 + "\n", "a.py": "a" * 1999 + "\n"}, keep=("Dockerfile",))
    out = apply_budget(flat, 0, TokenBudget(1200))
    assert kept_files(out, flat) == {"Dockerfile"}


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(1, 3000), min_size=1, max_size=6),
    st.integers(40, 2500),
    st.integers(40, 2500),
)
def test_truncation_monotonicity(sizes, b1, b2):
    flat = make_flat({f"f{i}.py": "q" * (n - 1) + "\n" for i, n in enumerate(sizes)})
    small, large = sorted((b1, b2))
    try:
        out_small = apply_budget(flat, 0, TokenBudget(small))
    except BudgetTooSmall:
        return
    out_large = apply_budget(flat, 0, TokenBudget(large))
    assert ceil_div(len(out_small), 4) <= small
    assert ceil_div(len(out_large), 4) <= large
    assert kept_files(out_small, flat) <= kept_files(out_large, flat)


def test_global_prompt_content():
    text = build_global_prompt(GlobalPromptConfig(), "Be brief.")
    assert "Meticulous Software Architect" in text
    assert text.count(ANTI_INVENTION_RULE) == 1
    assert "Be brief." in text


def test_global_config_validation():
    with pytest.raises(ValueError):
        GlobalPromptConfig(role_line=" ")
    with pytest.raises(ValueError):
        TokenBudget(0)


def test_section_prompts():
    t = default_template()
    containers = build_section_prompt(t.by_index(3))
    assert "applications and data stores" in containers
    assert "@startuml" in containers and "### 3.1 Component Diagram" in containers
    overview = build_section_prompt(t.by_index(1))
    assert "plantuml" not in overview.lower()
    skeleton = DEFAULT_SKELETONS[DiagramKind.DEPLOYMENT]
    assert skeleton in build_section_prompt(t.by_index(8), skeleton)


def test_skeletons_are_valid_plantuml():
    for kind, text in DEFAULT_SKELETONS.items():
        assert "@startuml" in text and "@enduml" in text, kind


def test_bundle_parts_and_budget():
    t = default_template()
    flat = make_flat({"a.py": "x = 1\n", "Dockerfile": "FROM scratch\n"})
    bundle = build_bundle(t.by_index(2), GlobalPromptConfig(), flat, TokenBudget(5000))
    assert "actors, interacting systems, APIs, and data sources" in bundle.section_part
    text = bundle.text
    assert text == bundle.global_part + PART_SEPARATOR + bundle.section_part + PART_SEPARATOR + bundle.context_part
    assert text.index(bundle.global_part) < text.index(bundle.section_part) < text.index(bundle.context_part)
    assert bundle.total_estimated_tokens == estimate_tokens(text) <= 5000


def test_all_bundles_share_global_part():
    t = default_template()
    flat = make_flat({"a.py": "x = 1\n"})
    bundles = build_all_bundles(t, flat)
    assert [b.section_id for b in bundles] == [s.id for s in t.sections]
    assert len({b.global_part for b in bundles}) == 1
    assert all(b.text.count(ANTI_INVENTION_RULE) == 1 for b in bundles)
    assert build_all_bundles(t, flat) == bundles


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4000), min_size=1, max_size=5), st.integers(1500, 6000))
def test_bundle_budget_respected(sizes, budget):
    flat = make_flat({f"m{i}.py": "w" * (n - 1) + "\n" for i, n in enumerate(sizes)})
    section = default_template().by_index(8)
    try:
        bundle = build_bundle(section, GlobalPromptConfig(), flat, TokenBudget(budget))
    except BudgetTooSmall:
        return
    assert bundle.total_estimated_tokens <= budget
