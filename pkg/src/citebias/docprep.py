"""LaTeX source preparation: cleaned main content and the ground-truth
intro reference list.

A paper's source bundle is reduced to the parts a reader would see first
(title, authors, conference info, abstract, introduction) with every
citation command rewritten to a numeric bracket group, e.g. ``[2,5]`` or
``[4-8]``. Numbering follows the compiled bibliography order: the order of
``\\bibitem`` entries when a .bbl is available, otherwise the order the
bibliography style would produce from the .bib database (citation order
for unsrt-family styles, alphabetical otherwise). Papers that cannot be
processed are excluded with a reason code, never dropped silently.

An external LaTeX toolchain can be plugged in as a compile check (success
or failure gates inclusion); numbering itself is always computed here so
runs are reproducible on machines without TeX.
"""

from __future__ import annotations

import logging
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    EXCL_COMPILE_ERROR,
    EXCL_MULTIPLE_MAINS,
    EXCL_NO_BIB,
    EXCL_NO_MAIN,
    Exclusion,
    StructureError,
    TexError,
)
from .textnorm import normalize

logger = logging.getLogger(__name__)

_DASH_CLASS = r"\-\u2010\u2011\u2012\u2013\u2014\u2015\u2212"
_RANGE_RE = re.compile(rf"^(\d+)\s*(?:--|[{_DASH_CLASS}])\s*(\d+)$")
_NUMBER_RE = re.compile(r"^\d+$")
_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")

_CITE_RE = re.compile(
    r"\\[Cc]ite(?:p|t|alp|alt|author|year|num)?\*?"
    r"(?:\[[^\]]*\])?(?:\[[^\]]*\])?\{([^{}]*)\}"
)
_STRIP_ENVS = (
    "figure",
    "figure*",
    "table",
    "table*",
    "algorithm",
    "algorithm*",
    "algorithmic",
    "tikzpicture",
    "wrapfigure",
)
_CONFERENCE_PKG_RE = re.compile(
    r"^\\usepackage(?:\[[^\]]*\])?\{[^}]*(?:neurips|icml|iclr|aaai|nips|corl|acl)[^}]*\}",
    re.IGNORECASE | re.MULTILINE,
)


@dataclass(frozen=True)
class BracketGroup:
    """One in-text citation group, e.g. ``[1]``, ``[2,5]``, ``[4-8]``.

    ``numbers`` is the exact expansion of the raw string: singletons,
    comma lists, and inclusive dash ranges. A group identifies a single
    reference unambiguously iff it expands to one number.
    """

    raw: str
    numbers: frozenset[int]

    @property
    def sorted_numbers(self) -> list[int]:
        return sorted(self.numbers)

    @property
    def uniquely_identifying(self) -> bool:
        return len(self.numbers) == 1


@dataclass
class MainContent:
    """Anonymizable main text plus its citation groups in reading order."""

    text: str
    citation_occurrences: list[BracketGroup] = field(default_factory=list)


@dataclass
class BibEntry:
    key: str
    raw: str
    title: str = ""
    authors: list[str] = field(default_factory=list)
    venue: str = ""
    year: int | None = None


@dataclass
class CompiledBibliography:
    """Bibliography entries in their final numbered order (1-based)."""

    entries: list[BibEntry]

    @property
    def numbers(self) -> dict[str, int]:
        return {entry.key: i + 1 for i, entry in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PreparedDocument:
    """Everything document preparation produces for one paper."""

    main_content: MainContent
    reference_texts: list[tuple[int, str]]
    bibliography: CompiledBibliography
    cleaned_tex: str
    rendered_text: str
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Step: locate the main tex file
# ---------------------------------------------------------------------------


def _read_tex(path: Path) -> str:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("latin-1")


def locate_main_tex(source_dir: Path | str) -> Path | Exclusion:
    """Find the unique .tex file containing both document markers.

    Zero candidates or more than one yield an exclusion rather than a
    guess; unreadable files raise OSError naming the path.
    """
    source_dir = Path(source_dir)
    candidates = []
    for path in sorted(source_dir.rglob("*.tex")):
        text = _read_tex(path)
        if "\\begin{document}" in text and "\\end{document}" in text:
            candidates.append(path)
    if not candidates:
        return Exclusion(EXCL_NO_MAIN, str(source_dir))
    if len(candidates) > 1:
        return Exclusion(
            EXCL_MULTIPLE_MAINS, ", ".join(str(p.name) for p in candidates)
        )
    return candidates[0]


# ---------------------------------------------------------------------------
# Low-level tex utilities
# ---------------------------------------------------------------------------


def _strip_comments(tex: str) -> str:
    # % starts a comment unless escaped as \%
    out = []
    for line in tex.split("\n"):
        i = 0
        while True:
            j = line.find("%", i)
            if j < 0:
                out.append(line)
                break
            if j > 0 and line[j - 1] == "\\":
                i = j + 1
                continue
            out.append(line[:j])
            break
    return "\n".join(out)


def _read_braced(text: str, start: int) -> tuple[str, int]:
    """Read one balanced {...} group starting at ``start``; returns
    (content, end_index_after_closing_brace)."""
    if start >= len(text) or text[start] != "{":
        raise TexError(f"expected '{{' at offset {start}")
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "{" and (i == 0 or text[i - 1] != "\\"):
            depth += 1
        elif text[i] == "}" and text[i - 1] != "\\":
            depth -= 1
            if depth == 0:
                return text[start + 1 : i], i + 1
    raise TexError("unbalanced braces")


def _find_command_arg(text: str, command: str) -> str | None:
    idx = text.find(f"\\{command}")
    while idx >= 0:
        j = idx + len(command) + 1
        while j < len(text) and text[j] in " \t\n":
            j += 1
        if j < len(text) and text[j] == "[":
            close = text.find("]", j)
            if close < 0:
                return None
            j = close + 1
            while j < len(text) and text[j] in " \t\n":
                j += 1
        if j < len(text) and text[j] == "{":
            content, _ = _read_braced(text, j)
            return content
        idx = text.find(f"\\{command}", idx + 1)
    return None


def check_environments(tex: str) -> None:
    """Verify begin/end nesting; raises TexError with the offending line."""
    stack: list[tuple[str, int]] = []
    for match in re.finditer(r"\\(begin|end)\{([^}]*)\}", tex):
        kind, name = match.group(1), match.group(2)
        line = tex.count("\n", 0, match.start()) + 1
        if kind == "begin":
            stack.append((name, line))
        else:
            if not stack:
                raise TexError(f"\\end{{{name}}} without a matching \\begin", line)
            if stack[-1][0] != name:
                open_name, open_line = stack[-1]
                raise TexError(
                    f"\\end{{{name}}} closes \\begin{{{open_name}}} from line {open_line}",
                    line,
                )
            stack.pop()
    if stack:
        name, line = stack[-1]
        raise TexError(f"\\begin{{{name}}} is never closed", line)


def _strip_environments(tex: str, names=_STRIP_ENVS) -> str:
    for name in names:
        escaped = re.escape(name)
        pattern = re.compile(
            rf"\\begin\{{{escaped}\}}.*?\\end\{{{escaped}\}}", re.DOTALL
        )
        tex = pattern.sub("", tex)
    return tex


def _strip_crossrefs(tex: str) -> str:
    tex = re.sub(r"~?\\(?:auto|eq|c|C|v)?ref\{[^}]*\}", "", tex)
    tex = re.sub(r"\\label\{[^}]*\}", "", tex)
    # footnotes can nest braces; remove with a balanced reader
    while True:
        idx = tex.find("\\footnote")
        if idx < 0:
            break
        j = idx + len("\\footnote")
        if j < len(tex) and tex[j] == "{":
            _, end = _read_braced(tex, j)
            tex = tex[:idx] + tex[end:]
        else:
            tex = tex[:idx] + tex[j:]
    return tex


def _compress_numbers(numbers: list[int]) -> str:
    """Render sorted numbers the way a compiled document would:
    runs of three or more compress to a dash range."""
    parts: list[str] = []
    i = 0
    while i < len(numbers):
        j = i
        while j + 1 < len(numbers) and numbers[j + 1] == numbers[j] + 1:
            j += 1
        if j - i >= 2:
            parts.append(f"{numbers[i]}-{numbers[j]}")
            i = j + 1
        else:
            parts.extend(str(n) for n in numbers[i : j + 1])
            i = j + 1
    return ",".join(parts)


def cited_keys(tex: str) -> list[str]:
    """All citation keys in first-appearance order."""
    seen: dict[str, None] = {}
    for match in _CITE_RE.finditer(tex):
        for key in match.group(1).split(","):
            key = key.strip()
            if key:
                seen.setdefault(key)
    return list(seen)


def _replace_citations(tex: str, numbering: dict[str, int]) -> str:
    def repl(match: re.Match) -> str:
        keys = [k.strip() for k in match.group(1).split(",") if k.strip()]
        nums = sorted({numbering[k] for k in keys if k in numbering})
        if not nums:
            return ""
        return f"[{_compress_numbers(nums)}]"

    return _CITE_RE.sub(repl, tex)


def _canonical_whitespace(text: str) -> str:
    lines = [line.rstrip() for line in text.split("\n")]
    text = "\n".join(lines)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip()


# ---------------------------------------------------------------------------
# Bibliography databases
# ---------------------------------------------------------------------------


def _latex_to_plain(text: str) -> str:
    """Best-effort plain-text rendering of LaTeX fragments."""
    text = _strip_comments(text)
    for _ in range(3):  # formatting commands may nest
        new = re.sub(
            r"\\(?:textbf|textit|textsc|texttt|textrm|emph|mbox|text|underline)\{([^{}]*)\}",
            r"\1",
            text,
        )
        if new == text:
            break
        text = new
    text = re.sub(r"\\href\{[^}]*\}\{([^{}]*)\}", r"\1", text)
    text = re.sub(r"\\url\{([^}]*)\}", r"\1", text)
    text = re.sub(r"\$([^$]*)\$", r"\1", text)
    text = re.sub(r"\\newblock\s*", "", text)
    text = re.sub(r"\\[a-zA-Z]+\{([^{}]*)\}", r"\1", text)
    text = re.sub(r"\\[a-zA-Z]+\s*", "", text)
    text = text.replace("~", " ").replace("{", "").replace("}", "")
    text = text.replace("\\&", "&").replace("\\%", "%").replace("\\_", "_")
    text = text.replace("``", '"').replace("''", '"').replace("--", "-")
    return re.sub(r"\s+", " ", text).strip()


def _split_bib_authors(author_field: str) -> list[str]:
    names = []
    for part in re.split(r"\s+and\s+", author_field):
        part = part.strip()
        if not part:
            continue
        if "," in part:
            last, _, first = part.partition(",")
            part = f"{first.strip()} {last.strip()}".strip()
        names.append(_latex_to_plain(part))
    return names


def parse_bib(text: str) -> dict[str, BibEntry]:
    """Parse a .bib database into entries keyed by citation key.

    Handles brace- and quote-delimited values with nesting; this is not a
    full BibTeX grammar but covers the entry shapes arXiv bundles use.
    """
    entries: dict[str, BibEntry] = {}
    idx = 0
    while True:
        at = text.find("@", idx)
        if at < 0:
            break
        match = re.match(r"@(\w+)\s*\{", text[at:])
        if not match:
            idx = at + 1
            continue
        if match.group(1).lower() in ("comment", "preamble", "string"):
            idx = at + 1
            continue
        body, end = _read_braced(text, at + match.end() - 1)
        idx = end
        key, _, fields_text = body.partition(",")
        key = key.strip()
        if not key:
            continue
        fields = _parse_bib_fields(fields_text)
        venue = (
            fields.get("journal")
            or fields.get("booktitle")
            or (f"arXiv preprint arXiv:{fields['eprint']}" if "eprint" in fields else "")
            or fields.get("howpublished", "")
        )
        year = None
        year_match = re.search(r"\d{4}", fields.get("year", ""))
        if year_match:
            year = int(year_match.group())
        entry = BibEntry(
            key=key,
            raw="",
            title=_latex_to_plain(fields.get("title", "")),
            authors=_split_bib_authors(fields.get("author", "")),
            venue=_latex_to_plain(venue),
            year=year,
        )
        entry.raw = render_entry(entry)
        entries[key] = entry
    return entries


def _parse_bib_fields(text: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    i = 0
    while i < len(text):
        match = re.compile(r"\s*(\w+)\s*=\s*").match(text, i)
        if not match:
            i += 1
            continue
        name = match.group(1).lower()
        i = match.end()
        if i >= len(text):
            break
        if text[i] == "{":
            value, i = _read_braced(text, i)
        elif text[i] == '"':
            close = text.find('"', i + 1)
            value = text[i + 1 : close] if close > 0 else text[i + 1 :]
            i = close + 1 if close > 0 else len(text)
        else:
            match = re.compile(r"[^,]*").match(text, i)
            value = match.group().strip()
            i = match.end()
        fields[name] = value
        comma = text.find(",", i)
        i = comma + 1 if comma >= 0 else len(text)
    return fields


def render_entry(entry: BibEntry) -> str:
    """Render a bibliography entry the way it would appear in print."""
    if len(entry.authors) > 1:
        authors = ", ".join(entry.authors[:-1]) + f", and {entry.authors[-1]}"
    elif entry.authors:
        authors = entry.authors[0]
    else:
        authors = "Unknown"
    parts = [f"{authors}. {entry.title}."]
    if entry.venue and entry.year:
        parts.append(f" {entry.venue}, {entry.year}.")
    elif entry.venue:
        parts.append(f" {entry.venue}.")
    elif entry.year:
        parts.append(f" {entry.year}.")
    return "".join(parts)


_BIBITEM_RE = re.compile(r"\\bibitem(?:\[[^\]]*\])?\{([^}]*)\}")


def parse_bbl(text: str) -> list[BibEntry]:
    """Parse a .bbl (or inline thebibliography) into ordered entries."""
    matches = list(_BIBITEM_RE.finditer(text))
    entries = []
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        chunk = text[match.end() : end]
        chunk = chunk.split("\\end{thebibliography}")[0]
        entries.append(BibEntry(key=match.group(1), raw=_latex_to_plain(chunk)))
    return entries


def _alpha_sort_key(entry: BibEntry) -> tuple:
    first_author = entry.authors[0] if entry.authors else ""
    last_name = first_author.split()[-1] if first_author.split() else ""
    return (
        normalize(last_name),
        normalize(" ".join(entry.authors)),
        entry.year or 0,
        normalize(entry.title),
    )


def resolve_bibliography(
    source_dir: Path,
    main_tex: str,
    cited: list[str],
) -> CompiledBibliography | Exclusion:
    """Determine the final bibliography order for a paper.

    A .bbl (file or inline thebibliography) fixes the order outright.
    A .bib database is ordered the way its style would: citation order
    for unsrt-family styles, alphabetical by author otherwise, over the
    cited entries only. Citing a key the database lacks is a compile
    error; having neither database kind excludes the paper.
    """
    source_dir = Path(source_dir)

    inline = re.search(
        r"\\begin\{thebibliography\}.*?\\end\{thebibliography\}", main_tex, re.DOTALL
    )
    bbl_entries: list[BibEntry] | None = None
    if inline:
        bbl_entries = parse_bbl(inline.group())
    else:
        bbl_files = sorted(source_dir.rglob("*.bbl"))
        if bbl_files:
            bbl_entries = parse_bbl(_read_tex(bbl_files[0]))

    bib_name = _find_command_arg(main_tex, "bibliography")
    bib_entries: dict[str, BibEntry] | None = None
    if bib_name:
        for name in bib_name.split(","):
            name = name.strip()
            path = source_dir / (name if name.endswith(".bib") else f"{name}.bib")
            if path.is_file():
                bib_entries = bib_entries or {}
                bib_entries.update(parse_bib(_read_tex(path)))
    if bib_entries is None:
        bib_files = sorted(source_dir.rglob("*.bib"))
        if bib_files:
            bib_entries = {}
            for path in bib_files:
                bib_entries.update(parse_bib(_read_tex(path)))

    if bib_entries:
        missing = [k for k in cited if k not in bib_entries]
        if missing:
            return Exclusion(
                EXCL_COMPILE_ERROR, f"undefined citation keys: {', '.join(missing)}"
            )
        style = _find_command_arg(main_tex, "bibliographystyle") or ""
        selected = [bib_entries[k] for k in cited]
        if "unsrt" not in style.lower():
            selected.sort(key=_alpha_sort_key)
        return CompiledBibliography(selected)

    if bbl_entries is not None:
        known = {e.key for e in bbl_entries}
        missing = [k for k in cited if k not in known]
        if missing:
            return Exclusion(
                EXCL_COMPILE_ERROR, f"undefined citation keys: {', '.join(missing)}"
            )
        return CompiledBibliography(bbl_entries)

    return Exclusion(EXCL_NO_BIB, str(source_dir))


def run_latex_check(
    latex_command: list[str], source_dir: Path, main_tex_path: Path
) -> Exclusion | None:
    """Run an external toolchain as a pass/fail compile gate."""
    try:
        proc = subprocess.run(
            [*latex_command, str(main_tex_path)],
            cwd=source_dir,
            capture_output=True,
            text=True,
            timeout=300,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        return Exclusion(EXCL_COMPILE_ERROR, f"{latex_command[0]}: {exc}")
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip().splitlines()
        detail = tail[-1] if tail else f"exit {proc.returncode}"
        return Exclusion(EXCL_COMPILE_ERROR, detail)
    return None


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------


def _extract_intro(body: str) -> str:
    match = re.search(r"\\section\*?\{([Ii]ntroduction[^}]*)\}", body)
    if match:
        start = match.end()
    else:
        # no heading: skip the front matter captured separately, so the
        # abstract is not duplicated into the introduction slice
        abstract_end = re.search(r"\\end\{abstract\}", body)
        maketitle = re.search(r"\\maketitle", body)
        if abstract_end:
            start = abstract_end.end()
        elif maketitle:
            start = maketitle.end()
        else:
            start = 0
    stops = []
    next_section = re.search(r"\\section\*?\{", body[start:])
    if next_section:
        stops.append(start + next_section.start())
    for marker in (r"\\bibliographystyle", r"\\bibliography\{", r"\\begin\{thebibliography\}", r"\\appendix", r"\\end\{document\}"):
        found = re.search(marker, body[start:])
        if found:
            stops.append(start + found.start())
    end = min(stops) if stops else len(body)
    return body[start:end]


def _extract_abstract(body: str) -> str:
    match = re.search(r"\\begin\{abstract\}(.*?)\\end\{abstract\}", body, re.DOTALL)
    if match:
        return match.group(1)
    arg = _find_command_arg(body, "abstract")
    return arg or ""


def _bib_machinery(tex: str) -> str:
    inline = re.search(
        r"\\begin\{thebibliography\}.*?\\end\{thebibliography\}", tex, re.DOTALL
    )
    if inline:
        return inline.group()
    lines = []
    style = re.search(r"\\bibliographystyle\{[^}]*\}", tex)
    if style:
        lines.append(style.group())
    bib = re.search(r"\\bibliography\{[^}]*\}", tex)
    if bib:
        lines.append(bib.group())
    return "\n".join(lines)


def clean_tex(tex: str, bibliography: CompiledBibliography | None = None) -> str:
    """Reduce a main tex file to its anonymizable skeleton.

    Keeps the document class and conference style lines, title, authors,
    abstract, introduction, and the bibliography machinery; strips
    comments, figures, tables, labels, and cross references; rewrites
    every citation command to a numeric bracket group. Without an explicit
    bibliography, numbers follow first-citation order.

    The function is idempotent: cleaning a cleaned document is a no-op.
    """
    if "\\begin{document}" not in tex or "\\end{document}" not in tex:
        raise TexError("missing \\begin{document} or \\end{document}")
    tex = _strip_comments(tex)
    check_environments(tex)

    docclass = re.search(r"\\documentclass(?:\[[^\]]*\])?\{[^}]*\}", tex)
    conference_lines = _CONFERENCE_PKG_RE.findall(tex)
    title = _find_command_arg(tex, "title") or ""
    author = _find_command_arg(tex, "author") or ""

    body = tex.split("\\begin{document}", 1)[1].split("\\end{document}", 1)[0]
    machinery = _bib_machinery(tex)

    body = _strip_environments(body)
    body = _strip_crossrefs(body)

    if bibliography is not None:
        numbering = bibliography.numbers
    else:
        numbering = {key: i + 1 for i, key in enumerate(cited_keys(body))}
    abstract = _canonical_whitespace(_replace_citations(_extract_abstract(body), numbering))
    intro = _canonical_whitespace(_replace_citations(_extract_intro(body), numbering))

    blocks = []
    if docclass:
        blocks.append(docclass.group())
    blocks.extend(conference_lines)
    blocks.append("\\begin{document}")
    if title:
        blocks.append(f"\\title{{{title}}}")
    if author:
        blocks.append(f"\\author{{{author}}}")
    if abstract:
        blocks.append("\\begin{abstract}\n" + abstract + "\n\\end{abstract}")
    blocks.append("\\section{Introduction}")
    if intro:
        blocks.append(intro)
    if machinery:
        blocks.append(machinery)
    blocks.append("\\end{document}")
    return "\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# Text rendering (the compiled-PDF stand-in)
# ---------------------------------------------------------------------------

REFERENCES_HEADING = "References"


def render_text(cleaned_tex: str, bibliography: CompiledBibliography) -> str:
    """Flatten a cleaned document to plain text with a numbered
    reference section, mirroring what PDF text extraction would yield."""
    docclass = re.search(r"\\documentclass(?:\[[^\]]*\])?\{([^}]*)\}", cleaned_tex)
    conference = _CONFERENCE_PKG_RE.findall(cleaned_tex)
    title = _find_command_arg(cleaned_tex, "title") or ""
    author = _find_command_arg(cleaned_tex, "author") or ""
    abstract = _extract_abstract(cleaned_tex)
    intro = _extract_intro(cleaned_tex.split("\\begin{document}", 1)[-1])

    lines: list[str] = []
    if title:
        lines.append(_latex_to_plain(title))
    if author:
        author_text = re.sub(r"\\and\b", ", ", author)
        lines.append(_latex_to_plain(author_text))
    conf_bits = [m.split("{")[-1].rstrip("}") for m in conference]
    if docclass:
        conf_bits.append(docclass.group(1))
    if conf_bits:
        lines.append(" ".join(dict.fromkeys(conf_bits)))
    lines.append("")
    if abstract:
        lines.append("Abstract")
        lines.append(_latex_to_plain(abstract))
        lines.append("")
    lines.append("1 Introduction")
    if intro:
        lines.append(_latex_to_plain(intro))
    lines.append("")
    lines.append(REFERENCES_HEADING)
    for i, entry in enumerate(bibliography.entries, start=1):
        lines.append(f"[{i}] {entry.raw}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Splitting and citation extraction
# ---------------------------------------------------------------------------

_ENTRY_START_RE = re.compile(r"^\[(\d+)\]\s*(.*)$")


def split_document(text: str) -> tuple[MainContent, list[tuple[int, str]]]:
    """Split flattened text into main content and the raw reference list.

    The reference list is every numbered entry after the references
    heading, with continuation lines reassembled. Raises StructureError
    when no heading is present.
    """
    pattern = re.compile(r"^(References|Bibliography)\s*$", re.MULTILINE | re.IGNORECASE)
    headings = list(pattern.finditer(text))
    if not headings:
        raise StructureError("no references heading found")
    heading = headings[-1]
    main_text = text[: heading.start()].rstrip()
    refs_text = text[heading.end() :]

    entries: list[tuple[int, str]] = []
    current_num: int | None = None
    current_parts: list[str] = []

    def flush():
        if current_num is not None:
            entries.append((current_num, " ".join(current_parts).strip()))

    for line in refs_text.split("\n"):
        line = line.strip()
        if not line:
            continue
        match = _ENTRY_START_RE.match(line)
        if match:
            flush()
            current_num = int(match.group(1))
            current_parts = [match.group(2)] if match.group(2) else []
        elif current_num is not None:
            current_parts.append(line)
    flush()

    main = MainContent(text=main_text, citation_occurrences=extract_citations(main_text))
    return main, entries


def _parse_group_content(content: str) -> frozenset[int] | None:
    numbers: set[int] = set()
    for token in content.split(","):
        token = token.strip()
        if _NUMBER_RE.match(token):
            value = int(token)
            if value < 1:
                return None
            numbers.add(value)
            continue
        range_match = _RANGE_RE.match(token)
        if range_match:
            lo, hi = int(range_match.group(1)), int(range_match.group(2))
            if lo < 1 or hi < lo:
                return None
            numbers.update(range(lo, hi + 1))
            continue
        return None
    return frozenset(numbers) if numbers else None


def extract_citations(text: str, max_number: int | None = None) -> list[BracketGroup]:
    """Every citation bracket group in reading order.

    Groups containing any non-numeric token are ignored entirely
    (precision over recall); when the reference-list length is known,
    groups citing beyond it are excluded as non-citations.
    """
    groups = []
    for match in _BRACKET_RE.finditer(text):
        numbers = _parse_group_content(match.group(1))
        if numbers is None:
            continue
        if max_number is not None and any(n > max_number for n in numbers):
            continue
        groups.append(BracketGroup(raw=match.group(0), numbers=numbers))
    return groups


def select_intro_references(
    groups: list[BracketGroup],
    reference_texts: list[tuple[int, str]],
    warnings: list[str] | None = None,
) -> list[tuple[int, str]]:
    """Reference entries cited by any group, in bibliography order.

    Numbers beyond the reference list record a dangling-citation warning
    on the paper instead of failing.
    """
    known = {num for num, _ in reference_texts}
    cited: set[int] = set()
    for group in groups:
        cited |= group.numbers
    dangling = sorted(cited - known)
    if dangling and warnings is not None:
        warnings.append(
            "dangling-citation: cited numbers beyond reference list: "
            + ", ".join(map(str, dangling))
        )
    return [(num, raw) for num, raw in reference_texts if num in cited]


def uniquely_identifiable_numbers(groups: list[BracketGroup]) -> set[int]:
    """Numbers with an unambiguous slot: cited in at least one
    single-number bracket group."""
    return {next(iter(g.numbers)) for g in groups if len(g.numbers) == 1}


# ---------------------------------------------------------------------------
# Orchestration for one paper
# ---------------------------------------------------------------------------


def prepare_source(
    source_dir: Path | str,
    latex_command: list[str] | None = None,
) -> PreparedDocument | Exclusion:
    """Run the full preparation for one source bundle.

    Returns a PreparedDocument, or an Exclusion naming why the paper
    cannot enter the corpus (no main file, multiple mains, no
    bibliography, compile failure).
    """
    source_dir = Path(source_dir)
    located = locate_main_tex(source_dir)
    if isinstance(located, Exclusion):
        return located
    tex = _read_tex(located)
    tex = _inline_inputs(tex, source_dir)

    if latex_command:
        failed = run_latex_check(latex_command, source_dir, located)
        if failed is not None:
            return failed

    cited = cited_keys(_strip_comments(tex))
    bibliography = resolve_bibliography(source_dir, tex, cited)
    if isinstance(bibliography, Exclusion):
        return bibliography
    try:
        cleaned = clean_tex(tex, bibliography)
    except TexError as exc:
        return Exclusion(EXCL_COMPILE_ERROR, str(exc))
    rendered = render_text(cleaned, bibliography)

    warnings: list[str] = []
    main, reference_texts = split_document(rendered)
    return PreparedDocument(
        main_content=main,
        reference_texts=reference_texts,
        bibliography=bibliography,
        cleaned_tex=cleaned,
        rendered_text=rendered,
        warnings=warnings,
    )


def _inline_inputs(tex: str, source_dir: Path) -> str:
    """Inline one level of \\input/\\include from the bundle."""

    def repl(match: re.Match) -> str:
        name = match.group(1).strip()
        path = source_dir / (name if name.endswith(".tex") else f"{name}.tex")
        if path.is_file():
            return _read_tex(path)
        return ""

    return re.sub(r"\\(?:input|include)\{([^}]*)\}", repl, tex)
