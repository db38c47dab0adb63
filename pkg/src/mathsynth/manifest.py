"""Run manifests: enough provenance to reproduce or audit any CLI run."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping, Optional


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(config: Mapping) -> str:
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(
    command: str,
    config: Mapping,
    inputs: Mapping[str, str],
    outputs: Mapping[str, str],
    seed: Optional[int] = None,
    timings_s: Optional[Mapping[str, float]] = None,
) -> dict:
    from . import __version__

    return {
        "tool_version": __version__,
        "command": command,
        "config": dict(config),
        "config_digest": config_digest(config),
        "inputs": dict(inputs),
        "outputs": dict(outputs),
        "seed": seed,
        "timings_s": dict(timings_s or {}),
    }


def manifest_path(output_path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + ".manifest.json")


def write_manifest(manifest: dict, output_path) -> Path:
    """Write the manifest next to the artifact it describes."""
    path = manifest_path(output_path)
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
