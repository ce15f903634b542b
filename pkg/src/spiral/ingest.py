"""Upload-side plumbing: format sniffing, archive expansion, and the
external converter adapter.

Format inference is fail-closed: the magic bytes narrow the candidate set,
the extension picks within it, and any disagreement rejects the file.
"""

from __future__ import annotations

import io
import shlex
import subprocess
import tempfile
import zipfile
from dataclasses import dataclass
from pathlib import Path

from .config import ConverterConfig
from .errors import (
    AdapterMissing,
    ConversionFailed,
    CorruptArchive,
    EmptyFile,
    UnsupportedFormat,
    ZipBomb,
)
from .model import SourceFormat

_EXTENSIONS: dict[str, SourceFormat] = {
    ".pdf": SourceFormat.PDF,
    ".doc": SourceFormat.WORD,
    ".docx": SourceFormat.WORD,
    ".ppt": SourceFormat.POWERPOINT,
    ".pptx": SourceFormat.POWERPOINT,
    ".xls": SourceFormat.EXCEL,
    ".xlsx": SourceFormat.EXCEL,
    ".png": SourceFormat.IMAGE,
    ".jpg": SourceFormat.IMAGE,
    ".jpeg": SourceFormat.IMAGE,
    ".gif": SourceFormat.IMAGE,
    ".bmp": SourceFormat.IMAGE,
    ".tif": SourceFormat.IMAGE,
    ".tiff": SourceFormat.IMAGE,
    ".txt": SourceFormat.TEXT,
    ".md": SourceFormat.MARKDOWN,
    ".markdown": SourceFormat.MARKDOWN,
    ".epub": SourceFormat.EBOOK,
    ".mobi": SourceFormat.EBOOK,
}

_CONVERT_INPUT_SUFFIX = {fmt: ext for ext, fmt in reversed(list(_EXTENSIONS.items()))}


def _magic_candidates(data: bytes) -> set[SourceFormat]:
    """Source formats compatible with the file's leading bytes."""
    if data.startswith(b"%PDF-"):
        return {SourceFormat.PDF}
    if data.startswith(b"PK\x03\x04"):
        # OOXML office files and epub are all zip containers.
        return {
            SourceFormat.WORD,
            SourceFormat.POWERPOINT,
            SourceFormat.EXCEL,
            SourceFormat.EBOOK,
        }
    if data.startswith(b"\xd0\xcf\x11\xe0"):
        return {SourceFormat.WORD, SourceFormat.POWERPOINT, SourceFormat.EXCEL}
    image_magics = (
        b"\x89PNG\r\n\x1a\n",
        b"\xff\xd8\xff",
        b"GIF87a",
        b"GIF89a",
        b"BM",
        b"II*\x00",
        b"MM\x00*",
    )
    if any(data.startswith(m) for m in image_magics):
        return {SourceFormat.IMAGE}
    if len(data) > 68 and data[60:68] == b"BOOKMOBI":
        return {SourceFormat.EBOOK}
    try:
        data.decode("utf-8")
    except UnicodeDecodeError:
        return set()
    return {SourceFormat.TEXT, SourceFormat.MARKDOWN}


def infer_format(filename: str, data: bytes) -> SourceFormat:
    """Source format from magic bytes first, extension second; fail closed."""
    if not data:
        raise EmptyFile(filename)
    ext = Path(filename).suffix.lower()
    by_ext = _EXTENSIONS.get(ext)
    if by_ext is None:
        raise UnsupportedFormat(f"unknown extension {ext!r} on {filename!r}")
    candidates = _magic_candidates(data)
    if by_ext not in candidates:
        raise UnsupportedFormat(
            f"{filename!r}: extension says {by_ext.value}, content does not match"
        )
    return by_ext


@dataclass(frozen=True)
class SkippedMember:
    name: str
    reason: str


def iter_archive(
    data: bytes, max_bytes: int, max_members: int
) -> list[tuple[str, bytes]]:
    """Allowed-format members of a zip archive as (name, bytes) pairs.

    Raises CorruptArchive for non-zip input and ZipBomb when the declared or
    actual decompressed size exceeds the cap. Callers classify members
    themselves so disallowed files can be reported rather than fatal.
    """
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
        infos = archive.infolist()
    except zipfile.BadZipFile as exc:
        raise CorruptArchive(str(exc))
    members = [i for i in infos if not i.is_dir()]
    if len(members) > max_members:
        raise ZipBomb(f"{len(members)} members exceeds cap of {max_members}")
    declared = sum(i.file_size for i in members)
    if declared > max_bytes:
        raise ZipBomb(f"declared {declared} bytes exceeds cap of {max_bytes}")
    out = []
    total = 0
    for info in members:
        with archive.open(info) as fh:
            # Read one byte past the cap so a lying header still trips it.
            content = fh.read(max_bytes - total + 1)
        total += len(content)
        if total > max_bytes:
            raise ZipBomb(f"decompressed size exceeds cap of {max_bytes}")
        out.append((info.filename, content))
    return out


def run_converter(conv: ConverterConfig, fmt: SourceFormat, data: bytes) -> bytes:
    """Execute the adapter command on the bytes and return the produced PDF."""
    suffix = _CONVERT_INPUT_SUFFIX.get(fmt, ".bin")
    with tempfile.TemporaryDirectory(prefix="spiral-convert-") as tmp:
        in_path = Path(tmp) / f"input{suffix}"
        out_path = Path(tmp) / "output.pdf"
        in_path.write_bytes(data)
        argv = [
            part.replace("{input}", str(in_path)).replace("{output}", str(out_path))
            for part in shlex.split(conv.command)
        ]
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                timeout=conv.timeout_s,
            )
        except subprocess.TimeoutExpired:
            raise ConversionFailed(f"converter exceeded {conv.timeout_s}s")
        except OSError as exc:
            raise ConversionFailed(f"converter failed to start: {exc}")
        if proc.returncode != 0:
            detail = proc.stderr.decode(errors="replace").strip()[:500]
            raise ConversionFailed(f"converter exited {proc.returncode}: {detail}")
        if not out_path.exists():
            raise ConversionFailed("converter produced no output file")
        produced = out_path.read_bytes()
    if not produced.startswith(b"%PDF-"):
        raise ConversionFailed("converter output is not a PDF")
    return produced


def pick_converter(config, fmt: SourceFormat) -> ConverterConfig:
    conv = config.converter_for(fmt)
    if conv is None:
        raise AdapterMissing(f"no converter configured for format {fmt.value}")
    return conv
