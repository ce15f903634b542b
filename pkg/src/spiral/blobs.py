"""Content-addressed blob storage.

Keys are the SHA-256 hex digest of the content, so `put` is idempotent and
identical uploads share one blob. Backends: an in-memory store for tests and
the harness, and a local directory for self-hosted deployments. Remote object
stores plug in by implementing the same three methods.
"""

from __future__ import annotations

import hashlib
import os
import threading
from pathlib import Path


def content_key(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class BlobStore:
    """Interface: put/get/exists over immutable content-addressed blobs."""

    def put(self, data: bytes) -> str:
        raise NotImplementedError

    def get(self, key: str) -> bytes:
        raise NotImplementedError

    def exists(self, key: str) -> bool:
        raise NotImplementedError


class MemoryBlobStore(BlobStore):
    def __init__(self):
        self._blobs: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, data: bytes) -> str:
        key = content_key(data)
        with self._lock:
            self._blobs.setdefault(key, bytes(data))
        return key

    def get(self, key: str) -> bytes:
        with self._lock:
            if key not in self._blobs:
                raise KeyError(key)
            return self._blobs[key]

    def exists(self, key: str) -> bool:
        with self._lock:
            return key in self._blobs


class LocalDirectoryBlobStore(BlobStore):
    """Blobs as files under root/<first two hex chars>/<digest>."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / key

    def put(self, data: bytes) -> str:
        key = content_key(data)
        path = self._path(key)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp-%d" % os.getpid())
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return key

    def get(self, key: str) -> bytes:
        path = self._path(key)
        if not path.exists():
            raise KeyError(key)
        return path.read_bytes()

    def exists(self, key: str) -> bool:
        return self._path(key).exists()


def open_blob_store(root: str | None) -> BlobStore:
    """Local directory store when a root is configured, else in-memory."""
    if root:
        return LocalDirectoryBlobStore(root)
    return MemoryBlobStore()
