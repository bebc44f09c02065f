"""Keyword-to-prompt agent loop.

Four scripted roles run over one chat backend: an expander turns keywords
into a draft prompt, an optimizer polishes the draft until it judges the
result good (bounded rounds), an extractor pulls foreground nouns out of
the final prompt, and a filter strips abstract words. The extractor and
filter may send the session back to the optimizer a bounded number of
times, so every session terminates regardless of backend behavior.

All roles answer with one JSON object {"verdict": "good"|"revise",
"payload": ...}; the payload is the prompt text or the noun list.
"""
from __future__ import annotations

import enum
import json
import string
from dataclasses import dataclass, field
from pathlib import Path

from .backends import ChatBackend
from .errors import (
    BackendError,
    EmptyForegroundError,
    KeywordMissingError,
    MalformedResponseError,
)

DEFAULT_STOPLIST = ("colorful", "details", "data")

_REFORMAT_SUFFIX = "\n\nYour previous reply was not valid JSON. Respond with only the JSON object."


class Role(enum.Enum):
    EXPANDER = "expander"
    OPTIMIZER = "optimizer"
    EXTRACTOR = "extractor"
    FILTER = "filter"


_REQUIRED_FIELDS = {
    Role.EXPANDER: {"keywords"},
    Role.OPTIMIZER: {"keywords", "draft"},
    Role.EXTRACTOR: {"draft"},
    Role.FILTER: {"draft", "nouns", "stoplist"},
}


def _identifiers(template: string.Template) -> set[str]:
    names = set()
    for match in template.pattern.finditer(template.template):
        name = match.group("named") or match.group("braced")
        if name is not None:
            names.add(name)
    return names


@dataclass(frozen=True)
class RolePrompt:
    role: Role
    template: string.Template

    @classmethod
    def load(cls, role: Role, directory: Path) -> "RolePrompt":
        text = (directory / f"{role.value}.txt").read_text()
        template = string.Template(text)
        found = _identifiers(template)
        required = _REQUIRED_FIELDS[role]
        if found != required:
            raise ValueError(
                f"{role.value} template placeholders {sorted(found)} != expected {sorted(required)}"
            )
        return cls(role=role, template=template)

    def render(self, **fields: str) -> str:
        return self.template.substitute(**fields)


def default_template_dir() -> Path:
    return Path(__file__).parent / "templates"


class TemplateSet:
    def __init__(self, directory: Path | None = None):
        directory = Path(directory) if directory is not None else default_template_dir()
        self.directory = directory
        self.prompts = {role: RolePrompt.load(role, directory) for role in Role}

    def render(self, role: Role, **fields: str) -> str:
        return self.prompts[role].render(**fields)


@dataclass(frozen=True)
class SessionCaps:
    max_opt: int = 3
    max_revisions: int = 2

    def __post_init__(self):
        if self.max_opt < 1 or self.max_revisions < 0:
            raise ValueError("caps must allow at least one optimizer round")


@dataclass
class TranscriptEntry:
    role: str
    request: str
    response: str


@dataclass
class AgentSession:
    """Everything one keyword-to-nouns run produced, including the audit trail."""

    keywords: list[str]
    draft: str = ""
    optimized: str = ""
    nouns: list[str] = field(default_factory=list)
    filtered: list[str] = field(default_factory=list)
    opt_rounds: int = 0
    revision_rounds: int = 0
    transcript: list[TranscriptEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "keywords": self.keywords,
            "draft": self.draft,
            "optimized": self.optimized,
            "nouns": self.nouns,
            "filtered": self.filtered,
            "opt_rounds": self.opt_rounds,
            "revision_rounds": self.revision_rounds,
            "warnings": self.warnings,
            "flags": self.flags,
            "transcript": [
                {"role": e.role, "request": e.request, "response": e.response}
                for e in self.transcript
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _call(backend: ChatBackend, role: Role, prompt: str, session: AgentSession) -> str:
    response = backend.complete(prompt)
    session.transcript.append(TranscriptEntry(role=role.value, request=prompt, response=response))
    return response


def _parse_structured(text: str) -> tuple[str, object]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedResponseError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "verdict" not in data or "payload" not in data:
        raise MalformedResponseError("response must be an object with verdict and payload")
    verdict = data["verdict"]
    if verdict not in ("good", "revise"):
        raise MalformedResponseError(f"unknown verdict {verdict!r}")
    return verdict, data["payload"]


def _parse_text_payload(text: str) -> tuple[str, str]:
    verdict, payload = _parse_structured(text)
    if not isinstance(payload, str) or not payload.strip():
        raise MalformedResponseError("payload must be a nonempty string")
    return verdict, payload


def _parse_list_payload(text: str) -> tuple[str, list[str]]:
    verdict, payload = _parse_structured(text)
    if not isinstance(payload, list) or not all(isinstance(x, str) for x in payload):
        raise MalformedResponseError("payload must be a list of strings")
    return verdict, payload


def _missing_keywords(keywords: list[str], prompt: str) -> list[str]:
    folded = prompt.casefold()
    return [k for k in keywords if k.casefold() not in folded]


def expand(
    keywords: list[str],
    backend: ChatBackend,
    templates: TemplateSet,
    session: AgentSession,
) -> str:
    """Keywords -> draft prompt. One retry if a keyword goes missing."""
    if not keywords:
        raise ValueError("keyword list must be nonempty")
    request = templates.render(Role.EXPANDER, keywords=", ".join(keywords))
    for attempt in range(2):
        response = _call(backend, Role.EXPANDER, request, session)
        try:
            _verdict, draft = _parse_text_payload(response)
        except MalformedResponseError as exc:
            if attempt:
                raise
            session.warnings.append(f"expander: {exc}, retrying")
            continue
        missing = _missing_keywords(keywords, draft)
        if not missing:
            session.draft = draft
            return draft
        if not attempt:
            session.warnings.append(f"expander omitted {missing}, retrying")
    raise KeywordMissingError(missing)


def optimize(
    keywords: list[str],
    draft: str,
    backend: ChatBackend,
    templates: TemplateSet,
    session: AgentSession,
    max_opt: int = 3,
) -> str:
    """Polish the draft until the optimizer says good or the cap hits."""
    if not draft:
        raise ValueError("draft prompt must be nonempty")
    current = draft
    verdict = "revise"
    rounds = 0
    while verdict == "revise" and rounds < max_opt:
        request = templates.render(
            Role.OPTIMIZER, keywords=", ".join(keywords), draft=current
        )
        response = _call(backend, Role.OPTIMIZER, request, session)
        verdict, current = _parse_text_payload(response)
        rounds += 1
    session.opt_rounds = rounds
    if verdict == "revise":
        session.flags.append("optimizer-cap")
    session.optimized = current
    return current


def _extract(
    optimized: str,
    backend: ChatBackend,
    templates: TemplateSet,
    session: AgentSession,
) -> tuple[str, list[str]]:
    request = templates.render(Role.EXTRACTOR, draft=optimized)
    try:
        response = _call(backend, Role.EXTRACTOR, request, session)
        verdict, nouns = _parse_list_payload(response)
    except MalformedResponseError as exc:
        session.warnings.append(f"extractor: {exc}, asking for a reformat")
        response = _call(backend, Role.EXTRACTOR, request + _REFORMAT_SUFFIX, session)
        verdict, nouns = _parse_list_payload(response)
    folded = optimized.casefold()
    kept = []
    for noun in nouns:
        if noun.casefold() in folded:
            kept.append(noun)
        else:
            session.warnings.append(f"extractor noun {noun!r} not in prompt, dropped")
    session.nouns = kept
    return verdict, kept


def extract_nouns(
    optimized: str,
    backend: ChatBackend,
    templates: TemplateSet,
    session: AgentSession,
) -> list[str]:
    """Pull foreground nouns out of the prompt; nouns absent from it are dropped."""
    _verdict, nouns = _extract(optimized, backend, templates, session)
    return nouns


def _apply_stoplist(nouns: list[str], stoplist: tuple[str, ...]) -> list[str]:
    folded = {w.casefold() for w in stoplist}
    return [n for n in nouns if n.casefold() not in folded]


def _filter(
    optimized: str,
    nouns: list[str],
    backend: ChatBackend,
    templates: TemplateSet,
    session: AgentSession,
    stoplist: tuple[str, ...],
) -> tuple[str, list[str]]:
    request = templates.render(
        Role.FILTER,
        draft=optimized,
        nouns=json.dumps(nouns),
        stoplist=", ".join(stoplist),
    )
    try:
        response = _call(backend, Role.FILTER, request, session)
        verdict, kept = _parse_list_payload(response)
    except (BackendError, MalformedResponseError) as exc:
        session.warnings.append(f"filter backend unusable ({exc}); stoplist only")
        session.flags.append("filter-fallback")
        session.filtered = _apply_stoplist(nouns, stoplist)
        return "good", session.filtered
    kept_fold = {n.casefold() for n in kept}
    extras = [n for n in kept if n.casefold() not in {x.casefold() for x in nouns}]
    if extras:
        session.warnings.append(f"filter invented {extras}, ignored")
    result = [n for n in nouns if n.casefold() in kept_fold]
    session.filtered = _apply_stoplist(result, stoplist)
    return verdict, session.filtered


def filter_abstract(
    optimized: str,
    nouns: list[str],
    backend: ChatBackend,
    templates: TemplateSet,
    session: AgentSession,
    stoplist: tuple[str, ...] = DEFAULT_STOPLIST,
) -> list[str]:
    """Drop abstract words via the backend plus the static stoplist.

    Keeps the input order. A dead or malformed backend degrades to
    stoplist-only filtering and flags the session instead of failing.
    """
    _verdict, filtered = _filter(optimized, nouns, backend, templates, session, stoplist)
    return filtered


def run_session(
    keywords: list[str],
    backend: ChatBackend,
    caps: SessionCaps = SessionCaps(),
    templates: TemplateSet | None = None,
    stoplist: tuple[str, ...] = DEFAULT_STOPLIST,
    draft: str | None = None,
) -> AgentSession:
    """Full keyword-to-nouns loop.

    The expander runs once (skipped when a draft is supplied); each
    revision request from the extractor or filter re-enters at the
    optimizer with the latest prompt, at most caps.max_revisions times.
    Raises EmptyForegroundError when no concrete nouns survive.
    """
    if not keywords:
        raise ValueError("keyword list must be nonempty")
    if templates is None:
        templates = TemplateSet()
    session = AgentSession(keywords=list(keywords))
    if draft is not None:
        if not draft.strip():
            raise ValueError("supplied draft prompt is empty")
        session.draft = draft
        current = draft
    else:
        current = expand(keywords, backend, templates, session)

    for round_no in range(caps.max_revisions + 1):
        last = round_no == caps.max_revisions
        optimized = optimize(keywords, current, backend, templates, session, caps.max_opt)
        verdict, nouns = _extract(optimized, backend, templates, session)
        if verdict == "revise" and not last:
            session.revision_rounds += 1
            current = optimized
            continue
        verdict, filtered = _filter(optimized, nouns, backend, templates, session, stoplist)
        if (verdict == "revise" or not filtered) and not last:
            session.revision_rounds += 1
            current = optimized
            continue
        break
    if not session.filtered:
        raise EmptyForegroundError(
            f"no concrete subject nouns after {session.revision_rounds} revisions"
        )
    return session
