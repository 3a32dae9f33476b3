"""The density-metric prompt template and its inverse."""

from __future__ import annotations

import re

from .model import DensityMetrics

PROMPT_TEMPLATE = (
    "Satellite imagery of {city}. "
    "The Building Coverage Ratio in this area is {bcr:.2f} %. "
    "The Building Volume Density is {bvd:.2f} cubic meters per square meter. "
    "The Road Density is {rd:.2f} kilometers per square kilometer."
)

_PROMPT_RE = re.compile(
    r"^Satellite imagery of (?P<city>.+)\. "
    r"The Building Coverage Ratio in this area is (?P<bcr>[-\d.]+) %\. "
    r"The Building Volume Density is (?P<bvd>[-\d.]+) cubic meters per square meter\. "
    r"The Road Density is (?P<rd>[-\d.]+) kilometers per square kilometer\.$"
)


def render_prompt(city: str, density: DensityMetrics) -> str:
    """Render the exact conditioning sentence for a tile."""
    return PROMPT_TEMPLATE.format(city=city, bcr=density.bcr, bvd=density.bvd, rd=density.rd)


def parse_prompt(prompt: str) -> tuple[str, DensityMetrics]:
    """Recover (city, metrics) from a rendered prompt; inverse to 2 decimals."""
    m = _PROMPT_RE.match(prompt)
    if m is None:
        raise ValueError(f"prompt does not match template: {prompt!r}")
    return m.group("city"), DensityMetrics(
        bcr=float(m.group("bcr")),
        bvd=float(m.group("bvd")),
        rd=float(m.group("rd")),
    )
