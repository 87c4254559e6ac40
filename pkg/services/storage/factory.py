from pathlib import Path
from typing import Union

from models.domain import Architecture
from services.storage.base import StorageBackend
from services.storage.hybrid_fs import HybridFsBackend
from services.storage.keyvalue import KeyValueBackend
from services.storage.relational import PerCnStoreBackend, SingleStoreBackend

BACKENDS = {
    Architecture.A1: SingleStoreBackend,
    Architecture.A2: PerCnStoreBackend,
    Architecture.A3: KeyValueBackend,
    Architecture.A4: HybridFsBackend,
}


def create_backend(architecture: Union[Architecture, str], root: Union[str, Path]) -> StorageBackend:
    """Open a backend whose stores live under root/<architecture>"""
    architecture = Architecture(architecture)
    return BACKENDS[architecture](Path(root) / architecture.value.lower())
