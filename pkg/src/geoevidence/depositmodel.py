"""Descriptive deposit models: load, validate, edit, and LLM distillation.

A deposit model is an ordered map of characteristic headings to short
description texts for one deposit type. The canonical heading set follows
the classic descriptive-model layout (synonyms, commodities, rock types,
tectonic setting, ...); extra headings are allowed with a warning.
Long source documents are distilled into this shape via a pluggable LLM
endpoint; the prompt template ships as an editable asset.
"""

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .errors import (
    CompletionParseError,
    IngestError,
    InputError,
    ParseError,
    ProviderError,
)

logger = logging.getLogger(__name__)

CANONICAL_HEADINGS = (
    "Synonyms",
    "Commodities",
    "Description",
    "Rock types",
    "Textures",
    "Age range",
    "Depositional environment",
    "Tectonic setting",
    "Alteration",
    "Ore controls",
)

MAX_CHARACTERISTIC_CHARS = 2000  # keeps each characteristic embeddable


@dataclass(frozen=True)
class DepositModel:
    deposit_type: str
    characteristics: tuple[tuple[str, str], ...]  # ordered (heading, text)
    source_docs: tuple[str, ...] = ()
    edited: bool = False

    def get(self, heading: str) -> str | None:
        for h, d in self.characteristics:
            if h == heading:
                return d
        return None

    def headings(self) -> list[str]:
        return [h for h, _ in self.characteristics]

    def as_dict(self) -> dict:
        return {
            "deposit_type": self.deposit_type,
            "characteristics": dict(self.characteristics),
            "source_docs": list(self.source_docs),
            "edited": self.edited,
        }


def model_from_dict(doc: dict, *, source: str = "") -> DepositModel:
    deposit_type = doc.get("deposit_type")
    characteristics = doc.get("characteristics")
    if not deposit_type or not isinstance(characteristics, dict):
        raise ParseError(f"{source}: model needs 'deposit_type' and 'characteristics'")
    model = DepositModel(
        deposit_type=str(deposit_type),
        characteristics=tuple((str(h), str(d)) for h, d in characteristics.items()),
        source_docs=tuple(str(s) for s in doc.get("source_docs", [])),
        edited=bool(doc.get("edited", False)),
    )
    _warn_noncanonical(model, source=source)
    return model


def _warn_noncanonical(model: DepositModel, *, source: str = "") -> None:
    canonical = set(CANONICAL_HEADINGS)
    extra = [h for h in model.headings() if h not in canonical]
    missing = [h for h in CANONICAL_HEADINGS if model.get(h) is None]
    if extra:
        logger.warning("%s: non-canonical heading(s) %s", source or model.deposit_type, extra)
    if missing:
        logger.warning("%s: missing canonical heading(s) %s", source or model.deposit_type, missing)


def _detect_duplicate_headings(pairs):
    seen = set()
    obj = {}
    for key, value in pairs:
        if key in seen:
            raise ParseError(f"duplicate heading {key!r}")
        seen.add(key)
        obj[key] = value
    return obj


def load_model_file(path: str | Path) -> DepositModel:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh, object_pairs_hook=_detect_duplicate_headings)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc.msg}", line=exc.lineno, offset=exc.pos) from exc
    return model_from_dict(doc, source=str(path))


def load_models(path: str | Path) -> list[DepositModel]:
    """Load one model file or every ``*.json`` in a directory.

    Invalid files are reported and skipped; zero valid models is an
    ingest error.
    """
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    models = []
    for f in files:
        try:
            models.append(load_model_file(f))
        except ParseError as exc:
            logger.warning("skipping %s: %s", f, exc)
    if not models:
        raise IngestError(f"{path}: no valid deposit models")
    return models


def save_model(model: DepositModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(model.as_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(path)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "warning"
    heading: str
    message: str


def validate_model(model: DepositModel) -> list[Diagnostic]:
    """Structural diagnostics; never raises."""
    diags = []
    for heading in CANONICAL_HEADINGS:
        value = model.get(heading)
        if value is None:
            diags.append(Diagnostic("warning", heading, "missing canonical heading"))
        elif not value.strip():
            diags.append(Diagnostic("warning", heading, "empty value"))
    for heading, value in model.characteristics:
        if len(value) > MAX_CHARACTERISTIC_CHARS:
            diags.append(
                Diagnostic(
                    "warning",
                    heading,
                    f"value is {len(value)} chars, over the {MAX_CHARACTERISTIC_CHARS} embeddability cap",
                )
            )
    return diags


DEFAULT_TEMPLATE_RESOURCE = "summarize.txt"


def default_prompt_template() -> str:
    return (
        resources.files("geoevidence")
        .joinpath("assets/templates")
        .joinpath(DEFAULT_TEMPLATE_RESOURCE)
        .read_text(encoding="utf-8")
    )


def render_prompt(template: str, deposit_type: str, document: str) -> str:
    required = ("{{deposit_type}}", "{{document}}", "{{headings}}")
    for placeholder in required:
        if placeholder not in template:
            raise InputError(f"prompt template is missing the {placeholder} placeholder")
    return (
        template.replace("{{deposit_type}}", deposit_type)
        .replace("{{headings}}", ", ".join(CANONICAL_HEADINGS))
        .replace("{{document}}", document)
    )


@dataclass(frozen=True)
class LLMProvider:
    """HTTP completion provider: POST {endpoint}/complete {"prompt"} -> {"completion"}."""

    endpoint: str
    timeout_s: float = 120.0

    def complete(self, prompt: str) -> str:
        url = self.endpoint.rstrip("/") + "/complete"
        try:
            resp = requests.post(url, json={"prompt": prompt}, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ProviderError(f"completion request to {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"LLM provider returned HTTP {resp.status_code}")
        try:
            return str(resp.json()["completion"])
        except (ValueError, KeyError) as exc:
            raise ProviderError(f"malformed LLM response: {exc}") from exc


_HEADING_LINE = re.compile(r"^([A-Za-z][A-Za-z ]*?):\s*(.*)$")


def parse_completion(completion: str) -> list[tuple[str, str]]:
    """Parse 'Heading: value' blocks, headings anchored at line starts.

    Continuation lines accumulate onto the current heading. Duplicated
    headings or a completion with no heading at all are parse failures
    (the raw completion rides on the exception for inspection).
    """
    pairs: list[tuple[str, list[str]]] = []
    seen = set()
    for line in completion.splitlines():
        match = _HEADING_LINE.match(line)
        if match and match.group(1).strip():
            heading = match.group(1).strip()
            if heading in seen:
                raise CompletionParseError(
                    f"duplicate heading {heading!r} in completion", completion=completion
                )
            seen.add(heading)
            pairs.append((heading, [match.group(2).strip()]))
        elif pairs and line.strip():
            pairs[-1][1].append(line.strip())
    if not pairs:
        raise CompletionParseError("no 'Heading: value' lines in completion", completion=completion)
    return [(h, " ".join(part for part in parts if part)) for h, parts in pairs]


def summarize_document(
    text: str,
    deposit_type: str,
    llm: LLMProvider,
    prompt_template: str | None = None,
    *,
    source_doc: str = "",
) -> DepositModel:
    """Distill a long document into a descriptive model via the LLM."""
    if not text.strip():
        raise InputError("document text is empty")
    template = prompt_template if prompt_template is not None else default_prompt_template()
    prompt = render_prompt(template, deposit_type, text)
    completion = llm.complete(prompt)
    characteristics = parse_completion(completion)
    model = DepositModel(
        deposit_type=deposit_type,
        characteristics=tuple(characteristics),
        source_docs=(source_doc,) if source_doc else (),
        edited=False,
    )
    _warn_noncanonical(model, source=f"summary of {deposit_type!r}")
    return model


def bundled_models() -> list[DepositModel]:
    """Deposit models shipped as package assets."""
    root = resources.files("geoevidence").joinpath("assets/deposit_models")
    models = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            doc = json.loads(entry.read_text(encoding="utf-8"))
            models.append(model_from_dict(doc, source=entry.name))
    return models
