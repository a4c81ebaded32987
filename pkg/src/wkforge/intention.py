from __future__ import annotations

import logging
import re
import unicodedata
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .errors import InvalidInput, MalformedResponse, ParseError, UnsupportedModality
from .models import (
    DecodedIntention,
    EmbeddingVector,
    EncodedIntention,
    IntentionBundle,
    ModalityItem,
    ProviderConfig,
)
from .providers import ProviderSuite, get_providers, l2_normalize
from .wkg import read_json_file


LOGGER = logging.getLogger(__name__)

MODALITIES = ("text", "image", "audio", "video")
SUPPORTED_MODALITIES = ("text", "image")
INFERRED_MARKER = "INFERRED:"
BUNDLE_ROLES = ("input", "output", "context")
SUMMARY_LIMIT = 240

DECODE_HEADER = (
    "Describe the client intention below as exactly three lines starting with "
    "INPUT:, OUTPUT: and PROCESS:. Resolve any missing component from the others."
)
_DECODED_LINE = re.compile(r"^\s*(INPUT|OUTPUT|PROCESS)\s*:\s*(.+?)\s*$", re.IGNORECASE)


class OcrEngine(Protocol):
    def extract_text(self, payload: bytes) -> str:  # pragma: no cover - interface
        ...


class FixtureOcr:
    """Offline OCR stand-in: the image payload carries its text as UTF-8."""

    def extract_text(self, payload: bytes) -> str:
        try:
            return payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidInput(f"image payload holds no embedded text fixture: {exc}") from exc


def normalize_text(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split())


def preprocess_input(item: ModalityItem, ocr: Optional[OcrEngine] = None) -> ModalityItem:
    if item.modality not in MODALITIES:
        raise InvalidInput(f"unknown modality {item.modality!r}")
    if item.modality not in SUPPORTED_MODALITIES:
        raise UnsupportedModality(f"{item.modality} inputs are not supported")
    if not item.payload:
        raise InvalidInput(f"{item.modality} item has an empty payload")
    if item.modality == "text":
        try:
            raw = item.payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidInput(f"text payload is not valid UTF-8: {exc}") from exc
    else:
        raw = (ocr or FixtureOcr()).extract_text(item.payload)
    canonical = normalize_text(raw)
    if not canonical:
        raise InvalidInput(f"{item.modality} item contains no text after preprocessing")
    return ModalityItem(item.modality, item.payload, canonical, item.source)


def encode_modality(
    item: ModalityItem,
    cfg: ProviderConfig,
    suite: Optional[ProviderSuite] = None,
) -> EmbeddingVector:
    if not item.canonical_text:
        raise InvalidInput("item must be preprocessed before encoding")
    return (suite or get_providers(cfg)).embedder.embed(item.canonical_text)


def validate_bundle(bundle: IntentionBundle) -> None:
    if not bundle.client_input:
        raise InvalidInput("the client input is mandatory")
    if not bundle.client_output and not bundle.process_context:
        raise InvalidInput("either the client output or the process context is mandatory")


def _prepared(items: Sequence[ModalityItem], ocr: Optional[OcrEngine]) -> Tuple[ModalityItem, ...]:
    return tuple(item if item.canonical_text else preprocess_input(item, ocr) for item in items)


def prepare_bundle(bundle: IntentionBundle, ocr: Optional[OcrEngine] = None) -> IntentionBundle:
    validate_bundle(bundle)
    return IntentionBundle(
        client_input=_prepared(bundle.client_input, ocr),
        client_output=_prepared(bundle.client_output, ocr),
        process_context=_prepared(bundle.process_context, ocr),
    )


def encode_intention(
    bundle: IntentionBundle,
    cfg: ProviderConfig,
    suite: Optional[ProviderSuite] = None,
    ocr: Optional[OcrEngine] = None,
) -> EncodedIntention:
    """Mean-pool every item embedding and renormalize."""
    prepared = prepare_bundle(bundle, ocr)
    vectors: List[EmbeddingVector] = []
    by_modality: Dict[str, List[EmbeddingVector]] = {}
    for item in prepared.items():
        vector = encode_modality(item, cfg, suite)
        vectors.append(vector)
        by_modality.setdefault(item.modality, []).append(vector)
    gamma = _mean_direction(vectors)
    per_modality = {modality: _mean_direction(group) for modality, group in sorted(by_modality.items())}
    LOGGER.info("Encoded intention from %s items (%s)", len(vectors), ", ".join(per_modality))
    return EncodedIntention(gamma=gamma, per_modality=per_modality)


def _mean_direction(vectors: Sequence[EmbeddingVector]) -> EmbeddingVector:
    try:
        return l2_normalize(np.mean(np.vstack(vectors), axis=0))
    except InvalidInput as exc:
        raise InvalidInput("intention vectors cancel out; no joint direction exists") from exc


def _component_text(items: Sequence[ModalityItem]) -> str:
    return " ".join(item.canonical_text or "" for item in items).strip()


def _summary(parts: Sequence[Tuple[str, str]]) -> str:
    text = "; ".join(f"{label}: {value}" for label, value in parts if value)
    if len(text) > SUMMARY_LIMIT:
        text = text[: SUMMARY_LIMIT - 3].rstrip() + "..."
    return text


def decode_intention(
    enc: EncodedIntention,
    bundle: IntentionBundle,
    cfg: ProviderConfig,
    suite: Optional[ProviderSuite] = None,
    ocr: Optional[OcrEngine] = None,
) -> DecodedIntention:
    if enc.gamma is None or not len(enc.gamma):
        raise InvalidInput("encoded intention is empty")
    prepared = prepare_bundle(bundle, ocr)
    texts = {
        "input": _component_text(prepared.client_input),
        "output": _component_text(prepared.client_output),
        "process": _component_text(prepared.process_context),
    }
    if cfg.offline_mode:
        return _decode_template(texts)
    generator = (suite or get_providers(cfg)).generator
    prompt = "\n".join(
        [
            DECODE_HEADER,
            f"Client input: {texts['input']}",
            f"Client output: {texts['output'] or '(missing)'}",
            f"Process context: {texts['process'] or '(missing)'}",
        ]
    )
    return parse_decoded(generator.complete(prompt))


def _decode_template(texts: Dict[str, str]) -> DecodedIntention:
    resolved = dict(texts)
    for missing in ("output", "process"):
        if not resolved[missing]:
            present = [(label, texts[label]) for label in ("input", "output", "process") if texts[label]]
            resolved[missing] = f"{INFERRED_MARKER} {_summary(present)}"
    return DecodedIntention(resolved["input"], resolved["output"], resolved["process"])


def parse_decoded(text: str) -> DecodedIntention:
    fields: Dict[str, str] = {}
    for line in text.splitlines():
        match = _DECODED_LINE.match(line)
        if match and match.group(2).strip():
            fields.setdefault(match.group(1).lower(), match.group(2).strip())
    missing = [name for name in ("input", "output", "process") if not fields.get(name)]
    if missing:
        raise MalformedResponse(f"decoder reply lacks {', '.join(missing)}")
    return DecodedIntention(fields["input"], fields["output"], fields["process"])


def load_bundle(directory: Path) -> IntentionBundle:
    """Read an intention bundle directory.

    ``manifest.json`` lists ``{"path", "modality"}`` entries whose first path
    segment names the role: ``input``, ``output`` or ``context``.
    """
    root = Path(directory)
    manifest_path = root / "manifest.json"
    manifest = read_json_file(manifest_path, "manifest")
    entries = manifest.get("files") if isinstance(manifest, dict) else None
    if not isinstance(entries, list):
        raise ParseError("expected an array", location=str(manifest_path), field="files")

    roles: Dict[str, List[ModalityItem]] = {role: [] for role in BUNDLE_ROLES}
    for index, entry in enumerate(entries):
        where = f"files[{index}]"
        if not isinstance(entry, dict) or not isinstance(entry.get("path"), str):
            raise ParseError("entry needs a string path", location=where, field="path")
        relative = Path(entry["path"])
        role = relative.parts[0] if relative.parts else ""
        if role not in roles:
            raise ParseError(f"unknown role directory {role!r}", location=where, field="path")
        modality = entry.get("modality")
        if modality not in MODALITIES:
            raise ParseError(f"unknown modality {modality!r}", location=where, field="modality")
        try:
            payload = (root / relative).read_bytes()
        except FileNotFoundError as exc:
            raise ParseError("listed file does not exist", location=where, field="path") from exc
        except OSError as exc:
            raise ParseError(f"cannot read listed file: {exc.strerror or exc}", location=where, field="path") from exc
        roles[role].append(ModalityItem(modality=modality, payload=payload, source=relative.as_posix()))

    bundle = IntentionBundle(
        client_input=tuple(roles["input"]),
        client_output=tuple(roles["output"]),
        process_context=tuple(roles["context"]),
    )
    validate_bundle(bundle)
    return bundle
