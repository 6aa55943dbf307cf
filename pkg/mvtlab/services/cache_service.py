"""
On-disk cache of grouped TupleRecord tables.

File layout (little-endian): magic b"MVT1", version u16, fingerprint
(32 bytes), record count u64, then packed records of exact keys (i64 each),
window values (i128 each, stored low u64 then high i64) and weight (u64).
"""
import hashlib
import logging
import os
import struct

import numpy as np
from sqlalchemy.exc import IntegrityError

from ..config import Config
from ..exceptions import CacheFormatError
from ..models import CachedTable
from ..utils.multisets import SideTable

logger = logging.getLogger(__name__)

MAGIC = b"MVT1"
VERSION = 1
_HEADER = struct.Struct("<4sH32sQ")


def side_fingerprint(system_fingerprint, side):
    return hashlib.sha256(system_fingerprint + side.encode()).digest()


def _record_dtype(n_keys, n_windows):
    fields = [("keys", "<i8", (n_keys,)), ("win_lo", "<u8", (n_windows,)),
              ("win_hi", "<i8", (n_windows,)), ("weight", "<u8")]
    return np.dtype(fields)


class CacheService:
    def __init__(self, cache_dir=None, session=None):
        self.cache_dir = cache_dir or Config.CACHE_DIR
        self.session = session
        os.makedirs(self.cache_dir, exist_ok=True)

    def path_for(self, key):
        return os.path.join(self.cache_dir, key.hex() + ".mvt")

    def cache_store(self, key, records: SideTable):
        n = len(records)
        packed = np.zeros(n, dtype=_record_dtype(records.keys.shape[1], records.windows.shape[1]))
        packed["keys"] = records.keys
        packed["win_lo"] = records.windows.astype(np.int64).view(np.uint64)
        packed["win_hi"] = np.where(records.windows < 0, -1, 0)
        packed["weight"] = records.weights.astype(np.uint64)
        path = self.path_for(key)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, key, n))
            fh.write(packed.tobytes())
        os.replace(tmp, path)
        logger.debug("Stored %d records under %s", n, key.hex()[:12])
        self._index(key, path, n)
        return path

    def cache_load(self, key, n_keys, n_windows):
        """Records stored under ``key``, or None when absent."""
        path = self.path_for(key)
        if not os.path.exists(path):
            logger.debug("Cache miss %s", key.hex()[:12])
            return None
        with open(path, "rb") as fh:
            header = fh.read(_HEADER.size)
            if len(header) < _HEADER.size:
                raise CacheFormatError(f"{path}: truncated header")
            magic, version, fingerprint, n = _HEADER.unpack(header)
            if magic != MAGIC:
                raise CacheFormatError(f"{path}: bad magic {magic!r}")
            if version != VERSION:
                swapped = struct.unpack(">H", struct.pack("<H", version))[0]
                reason = "byte order" if swapped == VERSION else f"version {version}"
                raise CacheFormatError(f"{path}: unsupported {reason}")
            if fingerprint != key:
                raise CacheFormatError(f"{path}: fingerprint mismatch")
            dtype = _record_dtype(n_keys, n_windows)
            packed = np.frombuffer(fh.read(n * dtype.itemsize), dtype=dtype)
        if len(packed) != n:
            raise CacheFormatError(f"{path}: expected {n} records, found {len(packed)}")
        hi = packed["win_hi"]
        if np.any((hi != 0) & (hi != -1)):
            raise CacheFormatError(f"{path}: window value outside the 64-bit lane")
        logger.info("Cache hit %s (%d records)", key.hex()[:12], n)
        return SideTable(keys=packed["keys"].astype(np.int64).reshape(n, n_keys),
                         windows=packed["win_lo"].astype(np.uint64).view(np.int64).reshape(n, n_windows),
                         weights=packed["weight"].astype(np.int64))

    def load_or_none(self, key, n_keys, n_windows):
        """``cache_load`` that treats unreadable files as misses."""
        try:
            return self.cache_load(key, n_keys, n_windows)
        except CacheFormatError as e:
            logger.warning("Ignoring cache file: %s", e)
            return None

    def _index(self, key, path, n):
        if self.session is None:
            return
        row = CachedTable(fingerprint=key.hex(), path=path, record_count=n, scale_bits=Config.SCALE_BITS)
        try:
            self.session.add(row)
            self.session.commit()
        except IntegrityError:
            self.session.rollback()

    def list_tables(self):
        if self.session is None:
            return []
        return self.session.query(CachedTable).order_by(CachedTable.created_at).all()
