"""Prompt template loading and rendering for every agent step.

Templates are external UTF-8 text files, one per (template id, locale),
loaded once at process start. File format:

    placeholders: name_a, name_b
    contract:
    <output contract lines, appended verbatim to every rendered prompt>
    ---
    <body with {name_a} style placeholders>

Default locale is zh-CN with an en fallback per template.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

DEFAULT_LOCALE = "zh-CN"
FALLBACK_LOCALE = "en"

PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")

TEMPLATE_IDS = (
    "stage1.overall.extract",
    "stage1.overall.interpret",
    "stage1.house.extract",
    "stage1.house.interpret",
    "stage1.tree.extract",
    "stage1.tree.interpret",
    "stage1.person.extract",
    "stage1.person.interpret",
    "stage2.label_tendencies",
    "stage2.synthesize",
)


class PromptError(Exception):
    pass


class TemplateFormatError(PromptError):
    pass


class MissingPlaceholder(PromptError):
    def __init__(self, template_id: str, name: str):
        super().__init__(f"template {template_id!r} needs placeholder {name!r}")
        self.name = name


class UnknownPlaceholder(PromptError):
    def __init__(self, template_id: str, name: str):
        super().__init__(f"binding {name!r} not used by template {template_id!r}")
        self.name = name


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    locale: str
    body: str
    required_placeholders: tuple[str, ...]
    output_contract: str

    def placeholders_in_body(self) -> tuple[str, ...]:
        seen: list[str] = []
        for match in PLACEHOLDER_RE.finditer(self.body):
            if match.group(1) not in seen:
                seen.append(match.group(1))
        return tuple(seen)


@dataclass(frozen=True)
class RenderedPrompt:
    template_id: str
    locale: str
    text: str


def parse_template_file(template_id: str, locale: str, text: str) -> PromptTemplate:
    lines = text.split("\n")
    if not lines or not lines[0].startswith("placeholders:"):
        raise TemplateFormatError(f"{template_id}: first line must declare placeholders")
    declared = [p.strip() for p in lines[0][len("placeholders:"):].split(",") if p.strip()]
    if len(lines) < 2 or lines[1].strip() != "contract:":
        raise TemplateFormatError(f"{template_id}: second line must be 'contract:'")
    try:
        sep = lines.index("---")
    except ValueError:
        raise TemplateFormatError(f"{template_id}: missing '---' body separator") from None
    contract = "\n".join(lines[2:sep]).strip()
    if not contract:
        raise TemplateFormatError(f"{template_id}: empty output contract")
    body = "\n".join(lines[sep + 1:]).strip()
    template = PromptTemplate(
        template_id=template_id,
        locale=locale,
        body=body,
        required_placeholders=tuple(declared),
        output_contract=contract,
    )
    in_body = set(template.placeholders_in_body())
    for name in declared:
        if name not in in_body:
            raise TemplateFormatError(
                f"{template_id}: required placeholder {name!r} never appears in body"
            )
    return template


def default_prompts_dir() -> Path:
    return Path(str(resources.files("htpscreen").joinpath("data/prompts")))


def load_template(
    template_id: str,
    prompts_dir: Optional[Path] = None,
    locale: str = DEFAULT_LOCALE,
) -> PromptTemplate:
    base = Path(prompts_dir) if prompts_dir is not None else default_prompts_dir()
    for candidate in (locale, FALLBACK_LOCALE):
        path = base / f"{template_id}.{candidate}.txt"
        if path.exists():
            return parse_template_file(template_id, candidate, path.read_text(encoding="utf-8"))
    raise PromptError(f"no template file for {template_id!r} (locale {locale!r}) under {base}")


def prompt_catalog(
    prompts_dir: Optional[Path] = None, locale: str = DEFAULT_LOCALE
) -> list[PromptTemplate]:
    """All ten agent templates: four aspects x extract/interpret plus stage 2."""
    return [load_template(tid, prompts_dir, locale) for tid in TEMPLATE_IDS]


def render(
    template: PromptTemplate, bindings: Mapping[str, str], strict: bool = True
) -> RenderedPrompt:
    """Substitute placeholders and append the output contract verbatim.

    Rendering is pure: same template and bindings always produce the same text.
    """
    needed = set(template.placeholders_in_body())
    for name in needed:
        if name not in bindings:
            raise MissingPlaceholder(template.template_id, name)
    if strict:
        for name in bindings:
            if name not in needed:
                raise UnknownPlaceholder(template.template_id, name)

    def substitute(match: re.Match) -> str:
        return str(bindings[match.group(1)])

    text = PLACEHOLDER_RE.sub(substitute, template.body)
    leftovers = PLACEHOLDER_RE.findall(text)
    stray = [name for name in leftovers if name in needed]
    if stray:
        raise PromptError(
            f"template {template.template_id!r}: markers survived rendering: {stray}"
        )
    return RenderedPrompt(
        template_id=template.template_id,
        locale=template.locale,
        text=text + "\n\n" + template.output_contract,
    )
