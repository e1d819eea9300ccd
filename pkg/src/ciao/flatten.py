"""Repository flattening: one deterministic text artifact per repository."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path, PurePosixPath
from typing import Iterable, Sequence

from .errors import DuplicatePath, EmptyAfterFiltering, RepoNotFound
from .languages import LanguageKind, UNKNOWN, detect_language, strip_comments

DEFAULT_EXCLUDE_GLOBS: tuple[str, ...] = (
    # version control
    ".git",
    ".hg",
    ".svn",
    # build output, caches, vendored dependencies
    "build",
    "dist",
    "target",
    "obj",
    "node_modules",
    "bower_components",
    "__pycache__",
    ".venv",
    "venv",
    ".tox",
    ".nox",
    ".mypy_cache",
    ".pytest_cache",
    ".ruff_cache",
    ".gradle",
    ".idea",
    ".vscode",
    "*.egg-info",
    "*.pyc",
    "*.pyo",
    "*.class",
    "*.o",
    "*.obj",
    "*.a",
    "*.so",
    "*.dll",
    "*.dylib",
    "*.exe",
    "*.jar",
    "*.war",
    "*.min.js",
    "*.map",
    "package-lock.json",
    "yarn.lock",
    "pnpm-lock.yaml",
    # binary media and fonts
    "*.png",
    "*.jpg",
    "*.jpeg",
    "*.gif",
    "*.bmp",
    "*.ico",
    "*.svg",
    "*.webp",
    "*.tif",
    "*.tiff",
    "*.mp3",
    "*.mp4",
    "*.wav",
    "*.avi",
    "*.mov",
    "*.pdf",
    "*.ttf",
    "*.otf",
    "*.woff",
    "*.woff2",
    # archives
    "*.zip",
    "*.tar",
    "*.gz",
    "*.tgz",
    "*.bz2",
    "*.xz",
    "*.7z",
    "*.rar",
    # data dumps
    "*.csv",
    "*.tsv",
    "*.parquet",
    "*.npy",
    "*.npz",
    "*.pkl",
    "*.h5",
    "*.hdf5",
    "*.db",
    "*.sqlite",
    # generated documentation
    "docs/_build",
    "_site",
    "htmlcov",
)

DEFAULT_ALWAYS_KEEP: tuple[str, ...] = (
    "Dockerfile",
    "docker-compose.yml",
    "docker-compose.yaml",
    "compose.yml",
    "compose.yaml",
    "package.json",
    "pom.xml",
    "build.gradle",
    "build.gradle.kts",
    "requirements.txt",
    "pyproject.toml",
    "setup.py",
    "setup.cfg",
    "Cargo.toml",
    "go.mod",
    "CMakeLists.txt",
    "Makefile",
)

# exclusion reason tags
EXCLUDED_PATTERN = "excluded-pattern"
EXCLUDED_DIRECTORY = "excluded-directory"
NOT_INCLUDED = "not-included"
TOO_LARGE = "too-large"
BINARY = "binary-or-non-text"
SYMLINK = "symlink"

FLAT_HEADER = "# Flattened Repository\n\n"
DELIMITER = "=" * 16


@dataclass(frozen=True)
class FilterConfig:
    include_globs: tuple[str, ...] = ()  # empty: include everything
    exclude_globs: tuple[str, ...] = DEFAULT_EXCLUDE_GLOBS
    always_keep_names: tuple[str, ...] = DEFAULT_ALWAYS_KEEP
    max_file_bytes: int = 512 * 1024
    strip_comments: bool = True

    def with_extra_excludes(self, *globs: str) -> "FilterConfig":
        return FilterConfig(
            self.include_globs,
            tuple(self.exclude_globs) + globs,
            self.always_keep_names,
            self.max_file_bytes,
            self.strip_comments,
        )


@dataclass(frozen=True)
class FileEntry:
    rel_path: str
    kind: LanguageKind
    raw_bytes: int
    content: str = ""
    excluded: str | None = None

    def __post_init__(self):
        parts = self.rel_path.split("/")
        if not self.rel_path or self.rel_path.startswith("/") or ".." in parts or "\\" in self.rel_path:
            raise ValueError(f"not a normalized relative path: {self.rel_path!r}")

    @property
    def included(self) -> bool:
        return self.excluded is None


def matches_glob(rel_path: str, pattern: str) -> bool:
    """gitignore-flavoured matching.

    A pattern without ``/`` matches any single path component; a pattern
    with ``/`` matches the whole path or any path below it.
    """
    pattern = pattern.strip("/")
    if not pattern:
        return False
    if "/" not in pattern:
        return any(fnmatchcase(part, pattern) for part in rel_path.split("/"))
    return fnmatchcase(rel_path, pattern) or fnmatchcase(rel_path, pattern + "/*")


def _matches_any(rel_path: str, patterns: Iterable[str]) -> bool:
    return any(matches_glob(rel_path, p) for p in patterns)


def _read_entry(root: Path, rel_path: str, cfg: FilterConfig) -> FileEntry:
    path = root / rel_path
    kind = detect_language(rel_path)
    size = path.stat().st_size
    if size > cfg.max_file_bytes:
        return FileEntry(rel_path, kind, size, excluded=TOO_LARGE)
    data = path.read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        return FileEntry(rel_path, UNKNOWN, size, excluded=BINARY)
    if "\x00" in text:
        return FileEntry(rel_path, UNKNOWN, size, excluded=BINARY)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    if text.startswith("\ufeff"):
        text = text[1:]
    if cfg.strip_comments:
        text = _drop_emptied_lines(text, strip_comments(text, kind))
    return FileEntry(rel_path, kind, size, text)


def _drop_emptied_lines(original: str, stripped: str) -> str:
    # the stripper keeps line alignment, so lines can be compared pairwise
    kept = []
    for before, after in zip(original.split("\n"), stripped.split("\n")):
        if after == before:
            kept.append(after)
        elif after.strip():
            kept.append(after.rstrip())
    return "\n".join(kept)


def discover_files(root: str | os.PathLike, cfg: FilterConfig = FilterConfig(), workers: int = 1) -> list[FileEntry]:
    """Walk ``root`` and classify every file.

    Returns included and excluded entries together, sorted by ``rel_path``;
    excluded entries carry a reason tag. Excluded directories are pruned and
    reported as a single entry. Symbolic links are never followed.
    """
    root = Path(root)
    if not root.is_dir():
        raise RepoNotFound(str(root))

    keep = set(cfg.always_keep_names)
    excluded: list[FileEntry] = []
    candidates: list[str] = []

    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        base = Path(dirpath).relative_to(root).as_posix()
        prefix = "" if base == "." else base + "/"
        for d in sorted(dirnames):
            rel = prefix + d
            if os.path.islink(os.path.join(dirpath, d)):
                excluded.append(FileEntry(rel, UNKNOWN, 0, excluded=SYMLINK))
                dirnames.remove(d)
            elif _matches_any(d, cfg.exclude_globs) or _matches_any(rel, [g for g in cfg.exclude_globs if "/" in g]):
                excluded.append(FileEntry(rel, UNKNOWN, 0, excluded=EXCLUDED_DIRECTORY))
                dirnames.remove(d)
        for name in filenames:
            rel = prefix + name
            full = os.path.join(dirpath, name)
            if os.path.islink(full):
                excluded.append(FileEntry(rel, UNKNOWN, 0, excluded=SYMLINK))
                continue
            if name not in keep:
                if _matches_any(rel, cfg.exclude_globs):
                    excluded.append(FileEntry(rel, detect_language(rel), os.path.getsize(full), excluded=EXCLUDED_PATTERN))
                    continue
                if cfg.include_globs and not _matches_any(rel, cfg.include_globs):
                    excluded.append(FileEntry(rel, detect_language(rel), os.path.getsize(full), excluded=NOT_INCLUDED))
                    continue
            candidates.append(rel)

    candidates.sort()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            read = list(pool.map(lambda rel: _read_entry(root, rel, cfg), candidates))
    else:
        read = [_read_entry(root, rel, cfg) for rel in candidates]

    entries = sorted(read + excluded, key=lambda e: e.rel_path)
    if not any(e.included for e in entries):
        raise EmptyAfterFiltering(f"no files left in {root} after filtering")
    return entries


@dataclass(frozen=True)
class DirNode:
    name: str
    dirs: tuple["DirNode", ...] = ()
    files: tuple[str, ...] = ()


@dataclass(frozen=True)
class RepoStructureTree:
    root: DirNode

    def iter_paths(self) -> list[str]:
        """Leaf paths in depth-first order, directories before files."""
        paths: list[str] = []

        def walk(node: DirNode, prefix: str) -> None:
            for d in node.dirs:
                walk(d, prefix + d.name + "/")
            paths.extend(prefix + f for f in node.files)

        walk(self.root, "")
        return paths

    def render_lines(self) -> list[str]:
        lines: list[str] = []

        def walk(node: DirNode, depth: int) -> None:
            pad = "  " * depth
            for d in node.dirs:
                lines.append(f"{pad}{d.name}/")
                walk(d, depth + 1)
            lines.extend(pad + f for f in node.files)

        walk(self.root, 0)
        return lines


def _byte_key(s: str) -> bytes:
    return s.encode("utf-8")


def build_structure_tree(paths: Sequence[str], root_name: str = ".") -> RepoStructureTree:
    seen: set[str] = set()
    nested: dict = {}
    for p in paths:
        if p in seen:
            raise DuplicatePath(p)
        seen.add(p)
        *dirs, leaf = p.split("/")
        node = nested
        for d in dirs:
            child = node.setdefault(d, {})
            if child is None:
                raise DuplicatePath(f"{p}: {d!r} is both a file and a directory")
            node = child
        if leaf in node:
            raise DuplicatePath(f"{p}: {leaf!r} is both a file and a directory")
        node[leaf] = None

    def freeze(name: str, node: dict) -> DirNode:
        dirs = sorted((k for k, v in node.items() if v is not None), key=_byte_key)
        files = sorted((k for k, v in node.items() if v is None), key=_byte_key)
        return DirNode(name, tuple(freeze(d, node[d]) for d in dirs), tuple(files))

    return RepoStructureTree(freeze(root_name, nested))


@dataclass(frozen=True)
class FlattenedRepository:
    header: str
    structure_block: str
    file_blocks: tuple[tuple[str, str], ...]
    char_count: int
    estimated_tokens: int
    priority_paths: frozenset[str] = field(default_factory=frozenset)

    @property
    def text(self) -> str:
        return self.header + self.structure_block + "".join(file_block(p, c) for p, c in self.file_blocks)

    def write(self, path: str | os.PathLike) -> None:
        """Debug dump; bytes match the in-memory serialization."""
        Path(path).write_bytes(self.text.encode("utf-8"))


def file_block(rel_path: str, content: str) -> str:
    body = content if (not content or content.endswith("\n")) else content + "\n"
    return f"{DELIMITER}\nFile: {rel_path}\n{DELIMITER}\n{body}\n"


def structure_block(tree: RepoStructureTree) -> str:
    lines = "".join(line + "\n" for line in tree.render_lines())
    return f"## Directory Structure\n```\n{lines}```\n\n"


def render_flattened(
    tree: RepoStructureTree,
    entries: Iterable[FileEntry],
    always_keep_names: Iterable[str] = DEFAULT_ALWAYS_KEEP,
    chars_per_token: int = 4,
) -> FlattenedRepository:
    by_path = {e.rel_path: e for e in entries if e.included}
    order = tree.iter_paths()
    if set(order) != set(by_path):
        missing = sorted(set(order) ^ set(by_path))
        raise ValueError(f"entries do not match tree leaves: {missing[:5]}")
    blocks = tuple((p, by_path[p].content) for p in order)
    struct = structure_block(tree)
    text_len = len(FLAT_HEADER) + len(struct) + sum(len(file_block(p, c)) for p, c in blocks)
    keep = set(always_keep_names)
    return FlattenedRepository(
        header=FLAT_HEADER,
        structure_block=struct,
        file_blocks=blocks,
        char_count=text_len,
        estimated_tokens=math.ceil(text_len / chars_per_token),
        priority_paths=frozenset(p for p in order if PurePosixPath(p).name in keep),
    )


def flatten_repository(root: str | os.PathLike, cfg: FilterConfig = FilterConfig(), workers: int = 1):
    """Convenience wrapper: discover, build the tree and render.

    Returns ``(flattened, entries)`` so callers can report exclusions.
    """
    entries = discover_files(root, cfg, workers=workers)
    included = [e for e in entries if e.included]
    tree = build_structure_tree([e.rel_path for e in included], root_name=Path(root).resolve().name)
    return render_flattened(tree, included, cfg.always_keep_names), entries
