from .manifest import PROVIDER_DIMS, BridgeError, ExportManifest
from .exporters import export_embeddings, export_inferences, export_translations

__all__ = [
    "PROVIDER_DIMS",
    "BridgeError",
    "ExportManifest",
    "export_embeddings",
    "export_inferences",
    "export_translations",
]
