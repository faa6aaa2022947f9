"""Relation verbalization: template extraction, selection, and rendering.

Templates carry two slots, SUBJ and OBJ, with OBJ in final position so the
cloze form works for autoregressive scoring. Templates come either from a
chat-completions endpoint or from a precomputed template file, so the
pipeline runs fully offline.
"""
from __future__ import annotations

import json
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .ingest import PopularityTable
from .model import ParseError, Triple, object_key
from .preprocess import PreprocessedSnapshot

SUBJ_SLOT = "SUBJ"
OBJ_SLOT = "OBJ"
_TERMINAL_PUNCTUATION = ".!?"


class MissingLabel(ValueError):
    """A label needed to render a template is absent."""


class EndpointError(RuntimeError):
    """The verbalization endpoint failed after retries."""


@dataclass(frozen=True)
class Template:
    relation: str
    text: str
    frequency: int = 1

    def __post_init__(self) -> None:
        if self.text.count(SUBJ_SLOT) != 1 or self.text.count(OBJ_SLOT) != 1:
            raise ValueError(f"template must contain exactly one SUBJ and one OBJ: {self.text!r}")
        tail = self.text[self.text.index(OBJ_SLOT) + len(OBJ_SLOT):]
        if tail.strip(_TERMINAL_PUNCTUATION + " "):
            raise ValueError(f"OBJ slot must be final: {self.text!r}")


@dataclass(frozen=True)
class VerbalizationSet:
    update_sentence: str
    primary_cloze: str
    alt_clozes: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.alt_clozes) > 4:
            raise ValueError("at most 4 alternative cloze tests are kept")


def normalize_template(text: str) -> str:
    """Collapse whitespace and strip terminal punctuation; casing is kept."""
    text = " ".join(text.split())
    return text.rstrip(_TERMINAL_PUNCTUATION + " ")


def extract_template(sentence: str, subject_label: str, object_label: str,
                     relation: str = "") -> Optional[Template]:
    """Turn a verbalization into a template, or None when it does not
    contain the subject or does not end with the object."""
    if not subject_label or not object_label:
        raise MissingLabel("subject and object labels must be non-empty")
    stripped = normalize_template(sentence)
    if not stripped.endswith(object_label):
        return None
    prefix = stripped[: len(stripped) - len(object_label)]
    if subject_label not in prefix:
        return None
    prefix = prefix.replace(subject_label, SUBJ_SLOT, 1)
    return Template(relation=relation, text=prefix + OBJ_SLOT)


def select_templates(candidates: Iterable[Template]) -> List[Template]:
    """The 5 most frequent templates, frequency descending, ties broken
    lexicographically on the template text."""
    merged: Dict[str, Template] = {}
    for candidate in candidates:
        existing = merged.get(candidate.text)
        if existing is None:
            merged[candidate.text] = candidate
        else:
            merged[candidate.text] = Template(
                existing.relation, existing.text, existing.frequency + candidate.frequency
            )
    ranked = sorted(merged.values(), key=lambda t: (-t.frequency, t.text))
    return ranked[:5]


def render(template: Template, subject_label: str, object_label: Optional[str] = None) -> str:
    """Fill the template. With an object label the full update sentence is
    produced; without one, the text is truncated at the OBJ slot (one
    trailing space removed) to form a cloze."""
    if not subject_label:
        raise MissingLabel("subject label is required")
    text = template.text.replace(SUBJ_SLOT, subject_label, 1)
    if object_label is not None:
        return text.replace(OBJ_SLOT, object_label, 1)
    cloze = text[: text.index(OBJ_SLOT)]
    if cloze.endswith(" "):
        cloze = cloze[:-1]
    return cloze


def build_verbalization_set(
    templates: Sequence[Template], subject_label: str, new_object_label: str
) -> VerbalizationSet:
    """Update sentence and clozes from a relation's ranked templates.

    The most frequent template provides the update sentence and primary
    cloze; the remaining templates (frequency order) provide up to 4
    alternative clozes.
    """
    if not templates:
        raise ValueError("need at least one template")
    ranked = sorted(templates, key=lambda t: (-t.frequency, t.text))
    primary = ranked[0]
    return VerbalizationSet(
        update_sentence=render(primary, subject_label, new_object_label),
        primary_cloze=render(primary, subject_label),
        alt_clozes=tuple(render(t, subject_label) for t in ranked[1:5]),
    )


# --- Triple sampling for template generation -----------------------------------


def sample_triples_for_templates(
    old: PreprocessedSnapshot,
    popularity: PopularityTable,
    seed: int = 0,
    top_entities: int = 100_000,
    per_relation_cap: int = 100,
) -> List[Triple]:
    """Sample triples to verbalize: the most popular entities are shuffled
    (seeded) and the first triple of each of their groups collected, until
    each relation reaches its cap."""
    subjects = sorted({key.subject.id for key in old.groups})
    subjects.sort(key=lambda entity_id: (-popularity[entity_id], entity_id))
    pool = subjects[:top_entities]
    random.Random(seed).shuffle(pool)
    groups_by_subject: Dict[str, List] = {}
    for key, triples in old.groups.items():
        groups_by_subject.setdefault(key.subject.id, []).append((key, triples))
    counts: Dict[str, int] = {}
    sampled: List[Triple] = []
    for entity_id in pool:
        for key, triples in sorted(groups_by_subject.get(entity_id, []),
                                   key=lambda item: item[0].relation.id):
            if counts.get(key.relation.id, 0) >= per_relation_cap:
                continue
            first = min(triples, key=lambda t: object_key(t.object))
            sampled.append(first)
            counts[key.relation.id] = counts.get(key.relation.id, 0) + 1
    return sampled


# --- Chat-completions verbalization ---------------------------------------------

SYSTEM_PROMPT = (
    "You are an advanced knowledge triple verbalization system. You take as "
    "input a knowledge triple (subject, relation, object) and generate a list "
    "of 10 linguistically diverse verbalizations of the triple. For example, "
    "the input could be : (France, capital, Paris) and one of your "
    "verbalizations may be : \"The capital of France is Paris\".\n\n"
    "The veracity of the knowledge triple does not affect the quality of your "
    "generation.\n\n"
    "Examples of correct verbalizations:\n\n"
    "- (Matriak, instance of, university) --> \"Matriak is a university.\"\n"
    "- (Johnathan Smith, date of death, 11-05-2012) --> \"Johnathan Smith died in 11-05-2012.\"\n"
    "- (Tranquility Base Hotel & Casino, follows, AM) --> \"Tranquility Base Hotel & Casino follows AM.\"\n"
    "- (Paris, named after, Parisii) --> \"Paris was named after Parisii.\"\n"
)

MAIN_PROMPT = (
    "Here is the knowledge triple to verbalize: ([SUB], [REL], [OBJ]). "
    "Your sentences should be concise and end with the term [OBJ].\n\n"
    "Due to the ambiguity that could arise from the provided labels, here is "
    "their meaning:\n\n"
    "- (subject) \"[SUB]\" : \"[SUB_DEF]\"\n"
    "- (relation) \"[REL]\" : \"[REL_DEF]\"\n"
    "- (object) \"[OBJ]\" : \"[OBJ_DEF]\"\n\n"
    "Finally, here is an example where the relation \"[REL]\" is employed : "
    "([EXP_SUB], [REL], [EXP_OBJ])."
)


@dataclass(frozen=True)
class TripleDefinitions:
    subject: str
    relation: str
    object: str
    subject_def: str = ""
    relation_def: str = ""
    object_def: str = ""
    example_subject: str = ""
    example_object: str = ""


def build_prompts(definitions: TripleDefinitions) -> Tuple[str, str]:
    substitutions = {
        "[SUB]": definitions.subject,
        "[REL]": definitions.relation,
        "[OBJ]": definitions.object,
        "[SUB_DEF]": definitions.subject_def,
        "[REL_DEF]": definitions.relation_def,
        "[OBJ_DEF]": definitions.object_def,
        "[EXP_SUB]": definitions.example_subject,
        "[EXP_OBJ]": definitions.example_object,
    }
    prompt = MAIN_PROMPT
    for marker, value in substitutions.items():
        prompt = prompt.replace(marker, value)
    return SYSTEM_PROMPT, prompt


_LIST_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s*)?(.+?)\s*$")


def parse_verbalizations(response: str) -> List[str]:
    """Parse a numbered or line-separated list of sentences."""
    sentences: List[str] = []
    for line in response.splitlines():
        line = line.strip()
        if not line:
            continue
        match = _LIST_ITEM_RE.match(line)
        if match is None:
            continue
        sentence = match.group(1).strip().strip('"')
        if sentence:
            sentences.append(sentence)
    if not sentences:
        raise ParseError("response contains no verbalizations")
    return sentences


class ChatCompletionsClient:
    """Minimal chat-completions HTTP client (temperature 0, 800 max tokens)."""

    def __init__(self, url: str, model: str, token: Optional[str] = None,
                 max_retries: int = 3, backoff_seconds: float = 1.0,
                 timeout: float = 60.0):
        self.url = url
        self.model = model
        self.token = token
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout

    def complete(self, system: str, user: str) -> str:
        import httpx

        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": 0,
            "max_tokens": 800,
        }
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries):
            try:
                response = httpx.post(self.url, json=payload, headers=headers,
                                      timeout=self.timeout)
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every failure is retryable here
                last_error = exc
                time.sleep(self.backoff_seconds * (2 ** attempt))
        raise EndpointError(f"verbalization endpoint failed: {last_error}")


def request_verbalizations(definitions: TripleDefinitions, client) -> List[str]:
    """Generate up to 10 verbalizations for one triple via the client.

    The client only needs a complete(system, user) -> str method, so tests
    can substitute a stub.
    """
    system, user = build_prompts(definitions)
    response = client.complete(system, user)
    return parse_verbalizations(response)[:10]


# --- Template file IO ------------------------------------------------------------


def load_templates(path: Union[str, Path]) -> Dict[str, List[Template]]:
    """Load a template file (JSONL: relation, template, frequency)."""
    table: Dict[str, List[Template]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            template = Template(data["relation"], data["template"],
                                int(data.get("frequency", 1)))
            table.setdefault(template.relation, []).append(template)
    return table


def save_templates(path: Union[str, Path], templates: Iterable[Template]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for template in templates:
            handle.write(json.dumps(
                {"relation": template.relation, "template": template.text,
                 "frequency": template.frequency},
                ensure_ascii=False, sort_keys=True) + "\n")
