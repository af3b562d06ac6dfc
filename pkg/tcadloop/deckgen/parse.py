"""
Light structural checks for SDE and SDevice decks.

Only delimiter balance, section names and the numeric header bindings are
looked at; the Scheme and SDevice languages themselves are not interpreted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

Number = Union[int, float]

SDE = "SDE"
SDEVICE = "SDevice"

SDE_NAMESPACES = frozenset({"sde", "sdegeo", "sdedr", "sdeio", "sdepe", "sdesnmesh"})
SDE_PLAIN_FORMS = frozenset({"define", "set!", "display", "newline"})

# category -> predicate on the head of a top-level form
SDE_MANDATORY = (
    ("regions", lambda head: head.startswith("sdegeo:create-")),
    ("doping", lambda head: head.startswith("sdedr:define-") and "profile" in head),
    ("contacts", lambda head: head == "sdegeo:define-contact-set"),
    ("mesh", lambda head: head == "sde:build-mesh"),
)

SDEVICE_SECTIONS = frozenset(
    {"File", "Electrode", "Physics", "Plot", "Math", "Solve", "System", "Device", "Thermode", "CurrentPlot"}
)
SDEVICE_MANDATORY = ("Electrode", "Physics", "Plot", "Math", "Solve")

_DEFINE_FORM = re.compile(r"^\(\s*define\s+([A-Za-z_][\w\-]*)\s+(\S+)\s*\)$", re.S)
_DEFINE_DIRECTIVE = re.compile(r"^#define\s+([A-Za-z_]\w*)\s+(\S+)\s*$")
_INT = re.compile(r"^[-+]?\d+$")
_CLOSERS = {")": "(", "}": "{"}


@dataclass(frozen=True)
class Diagnostic:
    line: Optional[int]
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}" if self.line is not None else self.message


@dataclass(frozen=True)
class ParsedDeck:
    kind: str
    params: Dict[str, Number] = field(default_factory=dict)
    sections: Tuple[str, ...] = ()
    diagnostics: Tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def _number(text: str) -> Optional[Number]:
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return None


def parse_deck(text: str, kind: str) -> ParsedDeck:
    if kind == SDE:
        return _parse_sde(text)
    if kind == SDEVICE:
        return _parse_sdevice(text)
    raise ValueError(f"unknown deck kind {kind!r}, expected {SDE!r} or {SDEVICE!r}")


def _parse_sde(text: str) -> ParsedDeck:
    diagnostics: List[Diagnostic] = []
    params: Dict[str, Number] = {}
    heads: List[str] = []

    stack: List[Tuple[str, int]] = []
    line = 1
    form_start: Optional[int] = None
    form_line = 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        elif ch == '"':
            i += 1
            while i < n and text[i] != '"':
                if text[i] == "\\":
                    i += 1
                elif text[i] == "\n":
                    line += 1
                i += 1
        elif ch in "({":
            if not stack:
                form_start, form_line = i, line
            stack.append((ch, line))
        elif ch in ")}":
            if not stack or stack[-1][0] != _CLOSERS[ch]:
                diagnostics.append(Diagnostic(line, f"unbalanced {ch!r}"))
            else:
                stack.pop()
                if not stack and form_start is not None:
                    form = text[form_start : i + 1]
                    head = form[1:].split(None, 1)[0].rstrip(")") if form[1:].strip() else ""
                    heads.append(head)
                    _check_sde_head(head, form_line, diagnostics)
                    m = _DEFINE_FORM.match(form)
                    if m:
                        value = _number(m.group(2))
                        if value is not None:
                            params[m.group(1)] = value
                    form_start = None
        elif not stack and not ch.isspace():
            diagnostics.append(Diagnostic(line, f"unexpected text outside a form: {ch!r}"))
            while i < n and not text[i].isspace() and text[i] not in "(;":
                i += 1
            continue
        i += 1

    for opener, opened_at in stack:
        diagnostics.append(Diagnostic(opened_at, f"unbalanced {opener!r} never closed"))

    missing = [name for name, matches in SDE_MANDATORY if not any(matches(h) for h in heads)]
    if missing:
        diagnostics.append(Diagnostic(None, f"missing mandatory sections: {', '.join(missing)}"))

    sections = tuple(dict.fromkeys(h.split(":", 1)[0] for h in heads if h))
    return ParsedDeck(SDE, params, sections, tuple(diagnostics))


def _check_sde_head(head: str, line: int, diagnostics: List[Diagnostic]) -> None:
    if ":" in head:
        namespace = head.split(":", 1)[0]
        if namespace not in SDE_NAMESPACES:
            diagnostics.append(Diagnostic(line, f"unknown section namespace {namespace!r}"))
    elif head not in SDE_PLAIN_FORMS:
        diagnostics.append(Diagnostic(line, f"unknown section {head!r}"))


def _parse_sdevice(text: str) -> ParsedDeck:
    diagnostics: List[Diagnostic] = []
    params: Dict[str, Number] = {}
    sections: List[str] = []

    stack: List[Tuple[str, int]] = []
    pending: Optional[Tuple[str, int]] = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#define"):
            m = _DEFINE_DIRECTIVE.match(stripped)
            value = _number(m.group(2)) if m else None
            if m and value is not None:
                params[m.group(1)] = value
            elif not m:
                diagnostics.append(Diagnostic(line_no, "malformed #define"))
            continue
        if stripped.startswith(("*", "#")):
            continue

        i, n = 0, len(raw)
        while i < n:
            ch = raw[i]
            if ch == '"':
                end = raw.find('"', i + 1)
                if end < 0:
                    diagnostics.append(Diagnostic(line_no, "unterminated string"))
                    break
                i = end + 1
                continue
            if ch in "({":
                if ch == "{" and not stack:
                    if pending is None:
                        diagnostics.append(Diagnostic(line_no, "section without a name"))
                    else:
                        name = pending[0]
                        if name not in SDEVICE_SECTIONS:
                            diagnostics.append(Diagnostic(pending[1], f"unknown section {name!r}"))
                        sections.append(name)
                    pending = None
                stack.append((ch, line_no))
            elif ch in ")}":
                if not stack or stack[-1][0] != _CLOSERS[ch]:
                    diagnostics.append(Diagnostic(line_no, f"unbalanced {ch!r}"))
                else:
                    stack.pop()
            elif not stack and (ch.isalpha() or ch == "_"):
                j = i
                while j < n and (raw[j].isalnum() or raw[j] == "_"):
                    j += 1
                if pending is not None:
                    diagnostics.append(Diagnostic(pending[1], f"stray word {pending[0]!r} outside a section"))
                pending = (raw[i:j], line_no)
                i = j
                continue
            elif not stack and not ch.isspace():
                diagnostics.append(Diagnostic(line_no, f"unexpected text outside a section: {ch!r}"))
            i += 1

    if pending is not None:
        diagnostics.append(Diagnostic(pending[1], f"stray word {pending[0]!r} outside a section"))
    for opener, opened_at in stack:
        diagnostics.append(Diagnostic(opened_at, f"unbalanced {opener!r} never closed"))

    missing = [name for name in SDEVICE_MANDATORY if name not in sections]
    if missing:
        diagnostics.append(Diagnostic(None, f"missing mandatory sections: {', '.join(missing)}"))

    return ParsedDeck(SDEVICE, params, tuple(sections), tuple(diagnostics))
