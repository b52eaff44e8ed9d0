"""Export manifests: which model, which dimension, which files.

A manifest pins the provider name and model revision so an export can be
reproduced later. Encoder providers carry a fixed published dimension; the
manifest refuses any mismatch up front rather than producing a store the
core would reject.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class BridgeError(Exception):
    pass


# Published output dimensions of the supported sentence encoders. The two
# non-encoder providers have no dimension.
PROVIDER_DIMS = {
    "ml-minilm": 384,
    "distil-muse": 512,
    "ml-mpnet": 768,
    "labse": 768,
    "cmlm-ml": 768,
    "comet": None,
    "translator": None,
}

# Upstream checkpoint names, recorded for provenance and used when the real
# model libraries are installed.
DEFAULT_REVISIONS = {
    "ml-minilm": "paraphrase-multilingual-MiniLM-L12-v2",
    "distil-muse": "distiluse-base-multilingual-cased-v2",
    "ml-mpnet": "paraphrase-multilingual-mpnet-base-v2",
    "labse": "LaBSE/2",
    "cmlm-ml": "cmlm/multilingual-base/1",
    "comet": "comet-atomic-2020",
    "translator": "translation-api-v2",
}


@dataclass(frozen=True)
class ExportManifest:
    provider: str
    corpus_path: Path
    output_path: Path
    dim: Optional[int] = None
    revision: str = ""

    def __post_init__(self):
        if self.provider not in PROVIDER_DIMS:
            raise BridgeError(
                f"unknown provider {self.provider!r}; expected one of {sorted(PROVIDER_DIMS)}"
            )
        published = PROVIDER_DIMS[self.provider]
        if published is not None:
            if self.dim is None:
                object.__setattr__(self, "dim", published)
            elif self.dim != published:
                raise BridgeError(
                    f"provider {self.provider!r} emits {published}-dimensional vectors, "
                    f"manifest says {self.dim}"
                )
        elif self.dim is not None:
            raise BridgeError(f"provider {self.provider!r} takes no dimension")
        if not self.revision:
            object.__setattr__(self, "revision", DEFAULT_REVISIONS[self.provider])
        object.__setattr__(self, "corpus_path", Path(self.corpus_path))
        object.__setattr__(self, "output_path", Path(self.output_path))

    @classmethod
    def load(cls, path) -> "ExportManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise BridgeError(f"cannot read manifest {path}: {exc}") from None
        unknown = set(raw) - {"provider", "corpus_path", "output_path", "dim", "revision"}
        if unknown:
            raise BridgeError(f"{path}: unknown manifest keys {sorted(unknown)}")
        try:
            return cls(
                provider=raw["provider"],
                corpus_path=raw["corpus_path"],
                output_path=raw["output_path"],
                dim=raw.get("dim"),
                revision=raw.get("revision", ""),
            )
        except KeyError as exc:
            raise BridgeError(f"{path}: missing manifest key {exc}") from None

    def to_json_obj(self) -> dict:
        obj = {
            "provider": self.provider,
            "corpus_path": str(self.corpus_path),
            "output_path": str(self.output_path),
            "revision": self.revision,
        }
        if self.dim is not None:
            obj["dim"] = self.dim
        return obj
