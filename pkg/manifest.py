"""
Run manifests: what command ran on which config, with which seed and tool
version, and which files it wrote.
"""
import hashlib
import json
import math
from pathlib import Path
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict

from config import TOOL_VERSION


def json_safe(value: Any) -> Any:
    """Non-finite floats become null; infinite depths are flagged by their own field."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def canonical_json(data: Any) -> str:
    """Key-sorted compact JSON, so equal inputs give equal bytes."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_digest(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: str
    config: str
    config_digest: str
    seed: Optional[int] = None
    tool_version: str = TOOL_VERSION
    outputs: List[str] = []

    @classmethod
    def build(cls, command: str, config: Any, seed: Optional[int] = None, outputs: List[str] = ()) -> "RunManifest":
        text = canonical_json(config)
        return cls(command=command, config=text, config_digest=config_digest(text), seed=seed, outputs=list(outputs))

    @property
    def run_id(self) -> str:
        key = f"{self.command}:{self.config_digest}:{'' if self.seed is None else self.seed}"
        return hashlib.sha256(key.encode("utf-8")).hexdigest()

    def digest_matches(self) -> bool:
        return config_digest(self.config) == self.config_digest

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, indent=2) + "\n"


def manifest_path(output: Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def write_manifest(manifest: RunManifest, output: Path) -> Path:
    path = manifest_path(output)
    path.write_bytes(manifest.to_json().encode("utf-8"))
    return path


def read_manifest(path: Path) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
