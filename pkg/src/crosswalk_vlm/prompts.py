"""System/user prompt templates per dataset config and multimodal bundle assembly."""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import MissingImage
from .render import DatasetConfig

OVERLAID_PROMPT_FILE = "overlaid_system_prompt.txt"

# Edits that turn the overlay prompt into a whole-patch prompt for the Plain
# dataset, which carries no annotation. Each source fragment occurs once.
_PLAIN_EDITS = (
    (
        "with a well-justified decision on whether a crosswalk is present on the \n"
        "specific road segment, defined by a **blue line** that ends at a **red dot**. \n"
        "Only crosswalks that intersect this blue line are relevant. You may note \n"
        "other crosswalks but must exclude them from your decision.\n",
        "with a well-justified decision on whether a crosswalk is present at the \n"
        "intersection shown in the image.\n",
    ),
    (
        "Identify any markings that cross the \n   blue line and connect",
        "Identify any markings that \n   connect",
    ),
    (
        "where roads meet and find the **blue line ending at a red dot**, indicating \n"
        "   the road segment of interest.",
        "where roads meet and the road segments leading into it.",
    ),
    ("to the lane direction, crossing the blue line.", "to the lane direction."),
    ("bars between the boundary lines) and cross the blue line.", "bars between the boundary lines)."),
    ("dividers and that they intersect the blue line.", "dividers."),
    (
        "Check that any markings \n   intersect the blue line and connect pedestrian paths.",
        "Check that any markings \n   connect pedestrian paths.",
    ),
    ("crossing the \n   blue line; inconsistent", "crossing the \n   road; inconsistent"),
    ("presence \n   at the blue line.", "presence \n   at the intersection."),
    ("present **crossing the blue line**. Justify", "present **at the intersection**. Justify"),
    ("are present and cross \nthe blue line, forming", "are present and cross \nthe road, forming"),
    ("perpendicular to the blue line.", "perpendicular to the lane direction."),
    (
        "REASON: The white rectangular pattern crosses the blue line, aligns with \n"
        "sidewalks, and follows the appearance of a high-visibility crosswalk, \n"
        "meeting the criteria for the specified road segment.",
        "REASON: The white rectangular pattern crosses the road, aligns with \n"
        "sidewalks, and follows the appearance of a high-visibility crosswalk, \n"
        "meeting the criteria for a crosswalk at this intersection.",
    ),
)

# inserted after the opening paragraph so the answer format stays last
_INTRO_END = "other crosswalks but must exclude them from your decision.\n"

_BLURRED_NOTE = (
    "Areas of the image away from the roads have been deliberately blurred; "
    "judge only the sharp road area and do not read blur as road markings.\n"
)
_SEPARATED_NOTE = (
    "You will receive two images: the first is the satellite image, and the "
    "second is the vector overlay of the first, drawn on a white background "
    "with the blue line and red dot at the same pixel positions.\n"
)

USER_PREAMBLE = "Analyze the attached satellite image patch and answer in the required format."
USER_PREAMBLE_SEPARATED = (
    "Image 1 is the satellite patch and image 2 is its road overlay. "
    "Analyze them and answer in the required format."
)


def overlay_prompt() -> str:
    return resources.files(__package__).joinpath("data", OVERLAID_PROMPT_FILE).read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptTemplate:
    config: DatasetConfig
    system_text: str
    user_preamble: str


def _apply_edits(text: str, edits) -> str:
    for old, new in edits:
        if text.count(old) != 1:
            raise AssertionError(f"prompt edit anchor not unique: {old[:40]!r}")
        text = text.replace(old, new)
    return text


def _insert_after_intro(text: str, sentence: str) -> str:
    return _apply_edits(text, [(_INTRO_END, _INTRO_END + "\n" + sentence)])


def build_template(config: DatasetConfig | str) -> PromptTemplate:
    config = DatasetConfig(config)
    base = overlay_prompt()
    if config is DatasetConfig.OVERLAID:
        system = base
    elif config is DatasetConfig.BLURRED:
        system = _insert_after_intro(base, _BLURRED_NOTE)
    elif config is DatasetConfig.SEPARATED:
        system = _insert_after_intro(base, _SEPARATED_NOTE)
    else:
        system = _apply_edits(base, _PLAIN_EDITS)
    preamble = USER_PREAMBLE_SEPARATED if config is DatasetConfig.SEPARATED else USER_PREAMBLE
    return PromptTemplate(config, system, preamble)


@dataclass(frozen=True)
class PromptBundle:
    template: PromptTemplate
    images: tuple[str, ...]
    image_sha256: tuple[str, ...]
    sample_id: str

    @property
    def digest(self) -> str:
        return bundle_digest(self.template.system_text, self.template.user_preamble, self.image_sha256)


def bundle_digest(system_text: str, user_preamble: str, image_sha256) -> str:
    h = hashlib.sha256()
    parts = [system_text.encode("utf-8"), user_preamble.encode("utf-8")]
    parts += [bytes.fromhex(d) for d in image_sha256]
    for part in parts:
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return h.hexdigest()


def assemble(template: PromptTemplate, sample, root: str | Path) -> PromptBundle:
    """Read a sample's PNGs from ``root`` and encode them for the request."""
    root = Path(root)
    if len(sample.images) != template.config.image_count:
        raise MissingImage(
            f"sample {sample.sample_id} has {len(sample.images)} image(s), "
            f"{template.config.value} needs {template.config.image_count}"
        )
    payloads, digests = [], []
    for rel in sample.images:
        path = root / rel
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise MissingImage(f"sample {sample.sample_id}: {path} not found") from None
        payloads.append(base64.b64encode(data).decode("ascii"))
        digests.append(hashlib.sha256(data).hexdigest())
    return PromptBundle(template, tuple(payloads), tuple(digests), sample.sample_id)
