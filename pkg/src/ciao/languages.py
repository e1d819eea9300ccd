"""Language detection and comment stripping.

Stripping is a lexer-lite state machine with four states (code, string,
line comment, block comment). It does not parse; nested block comments
are not tracked and the first closing delimiter ends the comment.

Newlines inside block comments are preserved so every output line is a
subsequence of the matching input line.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import PurePosixPath

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StringDelimiter:
    quote: str
    escape: str | None = "\\"
    # single-line strings end at an unescaped newline, which keeps stray
    # apostrophes in prose-like lines from swallowing the rest of a file
    multiline: bool = False


@dataclass(frozen=True)
class LanguageKind:
    name: str
    line_comment_markers: tuple[str, ...] = ()
    block_comment_pairs: tuple[tuple[str, str], ...] = ()
    string_delimiters: tuple[StringDelimiter, ...] = ()
    # shell and YAML only treat `#` as a comment at line start or after blanks
    line_marker_needs_space: bool = False
    extensions: tuple[str, ...] = field(default=(), compare=False)
    file_names: tuple[str, ...] = field(default=(), compare=False)

    @property
    def is_unknown(self) -> bool:
        return not (self.line_comment_markers or self.block_comment_pairs)


_C_BLOCK = (("/*", "*/"),)
_DQ = StringDelimiter('"')
_SQ = StringDelimiter("'")
_SQ_RAW = StringDelimiter("'", escape=None)

C_FAMILY = LanguageKind(
    "C-family",
    ("//",),
    _C_BLOCK,
    (_DQ, _SQ),
    extensions=(".c", ".h", ".cc", ".cpp", ".cxx", ".hh", ".hpp", ".hxx", ".ino", ".cu", ".cs", ".m", ".mm"),
)
PYTHON = LanguageKind(
    "Python",
    ("#",),
    (),
    (
        StringDelimiter('"""', multiline=True),
        StringDelimiter("'''", multiline=True),
        _DQ,
        _SQ,
    ),
    extensions=(".py", ".pyi", ".pyx", ".pxd"),
    file_names=("SConstruct", "SConscript"),
)
SHELL = LanguageKind(
    "Shell-family",
    ("#",),
    (),
    (_DQ, _SQ_RAW),
    line_marker_needs_space=True,
    extensions=(".sh", ".bash", ".zsh", ".ksh", ".toml", ".cmake", ".mk", ".dockerfile", ".properties", ".r"),
    file_names=(
        "Dockerfile",
        "Containerfile",
        "Makefile",
        "GNUmakefile",
        "CMakeLists.txt",
        "requirements.txt",
        "Procfile",
        "Gemfile",
        ".gitignore",
        ".dockerignore",
        ".env.example",
    ),
)
WEB_MARKUP = LanguageKind(
    "Web-markup/XML",
    (),
    (("<!--", "-->"),),
    (),
    extensions=(".html", ".htm", ".xhtml", ".xml", ".xsd", ".xsl", ".xslt", ".plist", ".csproj", ".launch"),
)
JS_TS = LanguageKind(
    "JS/TS-family",
    ("//",),
    _C_BLOCK,
    (_DQ, _SQ, StringDelimiter("`", multiline=True)),
    extensions=(".js", ".jsx", ".mjs", ".cjs", ".ts", ".tsx", ".mts", ".cts"),
)
JAVA = LanguageKind(
    "Java",
    ("//",),
    _C_BLOCK,
    (StringDelimiter('"""', multiline=True), _DQ, _SQ),
    extensions=(".java", ".kt", ".kts", ".scala", ".groovy", ".gradle"),
)
GO = LanguageKind(
    "Go",
    ("//",),
    _C_BLOCK,
    (_DQ, _SQ, StringDelimiter("`", escape=None, multiline=True)),
    extensions=(".go",),
)
RUST = LanguageKind(
    "Rust",
    ("//",),
    _C_BLOCK,
    # no `'` delimiter: lifetimes ('a) would open a string
    (StringDelimiter('"', multiline=True),),
    extensions=(".rs",),
)
YAML = LanguageKind(
    "YAML",
    ("#",),
    (),
    (_DQ, _SQ_RAW),
    line_marker_needs_space=True,
    extensions=(".yml", ".yaml"),
)
JSON = LanguageKind(
    "JSON",
    ("//",),
    _C_BLOCK,
    (_DQ,),
    extensions=(".json", ".jsonc", ".json5"),
)
SQL = LanguageKind(
    "SQL",
    ("--",),
    _C_BLOCK,
    (_SQ_RAW, StringDelimiter('"', escape=None)),
    extensions=(".sql",),
)
UNKNOWN = LanguageKind("Unknown")

ALL_KINDS: tuple[LanguageKind, ...] = (
    C_FAMILY,
    PYTHON,
    SHELL,
    WEB_MARKUP,
    JS_TS,
    JAVA,
    GO,
    RUST,
    YAML,
    JSON,
    SQL,
    UNKNOWN,
)

_BY_EXTENSION = {ext: kind for kind in ALL_KINDS for ext in kind.extensions}
_BY_NAME = {name: kind for kind in ALL_KINDS for name in kind.file_names}


def detect_language(rel_path: str) -> LanguageKind:
    """Map a repository-relative path to its LanguageKind.

    Extension lookup (case-insensitive) wins; exact file names such as
    ``Dockerfile`` are the fallback. Anything else is ``UNKNOWN``.
    """
    if not rel_path:
        raise ValueError("empty path")
    name = PurePosixPath(rel_path).name
    suffix = PurePosixPath(name).suffix.lower()
    if suffix and suffix in _BY_EXTENSION:
        return _BY_EXTENSION[suffix]
    return _BY_NAME.get(name, UNKNOWN)


def kind_by_name(name: str) -> LanguageKind:
    for kind in ALL_KINDS:
        if kind.name == name:
            return kind
    raise KeyError(name)


@dataclass(frozen=True)
class _Opener:
    text: str
    role: str  # "string" | "block" | "line"
    close: str = ""
    delimiter: StringDelimiter | None = None


def _openers(kind: LanguageKind) -> tuple[_Opener, ...]:
    ops = [_Opener(d.quote, "string", d.quote, d) for d in kind.string_delimiters]
    ops += [_Opener(o, "block", c) for o, c in kind.block_comment_pairs]
    ops += [_Opener(m, "line") for m in kind.line_comment_markers]
    # longest first so `"""` beats `"`
    return tuple(sorted(ops, key=lambda op: -len(op.text)))


_CODE, _STRING, _LINE, _BLOCK = "code", "string", "line", "block"


def strip_comments(text: str, kind: LanguageKind, warnings: list[str] | None = None) -> str:
    """Remove comments from ``text`` according to ``kind``.

    Line comments lose everything from the marker up to (not including)
    the newline. Block comments lose their delimiters and body, except for
    embedded newlines. Markers inside string literals are kept. An
    unterminated block comment is stripped to the end of the text and a
    warning is appended to ``warnings`` (and logged).
    """
    if not text or kind.is_unknown:
        return text

    openers = _openers(kind)
    candidates = re.compile("[" + re.escape("".join(sorted({op.text[0] for op in openers}))) + "]")
    out: list[str] = []
    n = len(text)
    i = 0
    state = _CODE
    current: _Opener | None = None

    while i < n:
        if state == _CODE:
            m = candidates.search(text, i)
            if m is None:
                out.append(text[i:])
                break
            j = m.start()
            out.append(text[i:j])
            i = j
            for op in openers:
                if not text.startswith(op.text, i):
                    continue
                if op.role == "line" and kind.line_marker_needs_space and i > 0 and not text[i - 1].isspace():
                    continue
                current = op
                break
            else:
                out.append(text[i])
                i += 1
                continue
            if current.role == "string":
                out.append(current.text)
                state = _STRING
            elif current.role == "block":
                state = _BLOCK
            else:
                state = _LINE
            i += len(current.text)

        elif state == _STRING:
            delim = current.delimiter
            ch = text[i]
            if delim.escape is not None and ch == delim.escape:
                out.append(text[i : i + 2])
                i += 2
            elif text.startswith(delim.quote, i):
                out.append(delim.quote)
                i += len(delim.quote)
                state = _CODE
            elif ch == "\n" and not delim.multiline:
                out.append(ch)
                i += 1
                state = _CODE
            else:
                out.append(ch)
                i += 1

        elif state == _LINE:
            j = text.find("\n", i)
            if j < 0:
                break
            i = j
            state = _CODE

        else:  # _BLOCK
            j = text.find(current.close, i)
            if j < 0:
                out.append("\n" * text.count("\n", i))
                msg = f"unterminated block comment ({current.text!r}) stripped to end of text"
                logger.warning(msg)
                if warnings is not None:
                    warnings.append(msg)
                break
            out.append("\n" * text.count("\n", i, j))
            i = j + len(current.close)
            state = _CODE

    return "".join(out)
