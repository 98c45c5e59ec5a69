"""Write positive detections as an osmChange document of new crossing nodes."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Iterable

from . import __version__

GENERATOR = f"crosswalk-vlm {__version__}"


def export_crossings(
    detections: Iterable[dict],
    *,
    model: str,
    seed: int | None = None,
    inputs: dict[str, str] | None = None,
) -> str:
    """Build an osmChange ``<create>`` block, one node per detection.

    Each detection needs ``lat``, ``lon`` and ``sample_id``; ``way_id`` and
    ``bundle_digest`` are recorded when present. Nodes get negative ids in
    input order, as new OSM objects must. Nothing is uploaded.
    """
    root = ET.Element("osmChange", version="0.6", generator=GENERATOR)
    if inputs or seed is not None:
        meta = ", ".join(f"{k}={v}" for k, v in sorted((inputs or {}).items()))
        root.append(ET.Comment(f" pipeline {__version__}; seed={seed}; inputs: {meta} "))
    create = ET.SubElement(root, "create")
    for k, d in enumerate(detections, start=1):
        node = ET.SubElement(
            create,
            "node",
            id=str(-k),
            version="0",
            lat=f"{d['lat']:.7f}",
            lon=f"{d['lon']:.7f}",
        )
        tags = {
            "highway": "crossing",
            "source": GENERATOR,
            "detection:model": model,
            "detection:sample": d["sample_id"],
        }
        if d.get("way_id") is not None:
            tags["detection:way"] = str(d["way_id"])
        if d.get("bundle_digest"):
            tags["detection:request"] = d["bundle_digest"]
        for key in sorted(tags):
            ET.SubElement(node, "tag", k=key, v=tags[key])
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"
