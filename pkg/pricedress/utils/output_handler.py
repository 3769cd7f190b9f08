import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from ..core.exceptions import OutputExistsError, UsageError
from .data_io import write_frame

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    """Everything needed to re-run a command and reproduce its outputs"""
    command: str
    config_path: Optional[str]
    inputs: Dict[str, str]
    output_dir: str
    seed: Optional[int]
    version: str
    config: Dict[str, Any] = field(default_factory=dict)
    arguments: Dict[str, Any] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            return cls(**data)
        except FileNotFoundError:
            raise UsageError(f"Manifest not found: {path}")
        except (ValueError, TypeError) as e:
            raise UsageError(f"Could not read manifest {path}: {e}") from e


def check_inputs(paths: Dict[str, Optional[str]]) -> Dict[str, str]:
    """Resolve input files, failing before any work if one is missing"""
    resolved = {}
    for name, path in paths.items():
        if path is None:
            continue
        if not Path(path).is_file():
            raise UsageError(f"Input file for {name} not found: {path}")
        resolved[name] = str(path)
    return resolved


class OutputHandler:
    """Write a command's outputs into one directory without silent overwrites"""

    def __init__(self, output_dir, force: bool = False, manifest_name: str = MANIFEST_NAME):
        self.output_dir = Path(output_dir)
        self.force = force
        self.manifest_name = manifest_name
        self.written: List[str] = []

    def reserve(self, names: Iterable[str]) -> None:
        """Refuse the whole run up front if any output already exists"""
        names = list(names) + [self.manifest_name]
        existing = [n for n in names if (self.output_dir / n).exists()]
        if existing and not self.force:
            raise OutputExistsError(
                f"Refusing to overwrite {', '.join(existing)} in {self.output_dir} (use --force)"
            )
        if existing:
            logger.warning("Overwriting %d existing outputs in %s", len(existing), self.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        target = self.output_dir / name
        if target.exists() and not self.force and name not in self.written:
            raise OutputExistsError(f"Refusing to overwrite {target} (use --force)")
        return target

    def write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        target = write_frame(frame, self.path(name))
        self.written.append(name)
        return target

    def write_text(self, text: str, name: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        self.written.append(name)
        return target

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.outputs = list(self.written)
        target = self.path(self.manifest_name)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(manifest.to_dict(), f, indent=2, sort_keys=True, default=str)
        logger.info("Manifest written to %s", target)
        return target
