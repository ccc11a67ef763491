"""Download and checksum-verify the MNIST IDX files."""

from __future__ import annotations

import gzip
import hashlib
import os
import tempfile
import urllib.error
import urllib.request
from pathlib import Path

from .data import MNIST_FILES

MIRRORS = ("https://ossci-datasets.s3.amazonaws.com/mnist/", "http://yann.lecun.com/exdb/mnist/")

# md5 of the published .gz archives
MNIST_MD5 = {
    "train-images-idx3-ubyte": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte": "ec29112dd5afa0611ce80d1b7f02629c",
}

# sha256 of the decompressed IDX payloads of the bundled 10k-digit subset
DESK_SHA256 = {
    "train-images-idx3-ubyte": "2f6eaec809f63ec4094ae6e1b16f60ed45e51488d904a0552c149df13a55e31b",
    "train-labels-idx1-ubyte": "b3abbf0ca28b6e48f70a734dffcf4d8d551da29fbe74a083fdd1297b82801aa1",
    "t10k-images-idx3-ubyte": "6eaaaeee1078d0bb7c7273c47aaef993217273fd2abb03db4eb291328026936b",
    "t10k-labels-idx1-ubyte": "9f6f6e30ea458ccfb82b59b08069bda55365865653a7c4d72c702d9329874b1a",
}


class DownloadError(OSError):
    pass


class ChecksumError(ValueError):
    pass


def file_digest(path, algorithm="md5", decompress=False):
    h = hashlib.new(algorithm)
    opener = gzip.open if decompress else open
    with opener(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _payload_sha256(path):
    try:
        return file_digest(path, "sha256", decompress=True)
    except (OSError, EOFError):  # not gzip, or truncated
        return None


def identify(data_dir):
    """Return ``"mnist"``, ``"desk"`` or raise :class:`ChecksumError` for the files in ``data_dir``."""
    data_dir = Path(data_dir)
    gz = {name: data_dir / f"{name}.gz" for name in MNIST_FILES.values()}
    missing = [str(p) for p in gz.values() if not p.exists()]
    if missing:
        raise FileNotFoundError(f"missing: {', '.join(missing)}")
    if all(file_digest(p) == MNIST_MD5[n] for n, p in gz.items()):
        return "mnist"
    bad = [n for n, p in gz.items() if _payload_sha256(p) != DESK_SHA256[n]]
    if not bad:
        return "desk"
    raise ChecksumError(f"{data_dir}: checksum mismatch for {', '.join(bad)}")


def _download(url, dest, timeout):
    fd, tmp = tempfile.mkstemp(dir=dest.parent, suffix=".part")
    try:
        with os.fdopen(fd, "wb") as out, urllib.request.urlopen(url, timeout=timeout) as resp:
            while chunk := resp.read(1 << 20):
                out.write(chunk)
        return Path(tmp)
    except BaseException:
        os.unlink(tmp)
        raise


def fetch_mnist(data_dir, mirrors=MIRRORS, timeout=60, log=print):
    """Download any missing or corrupt archive; every file is md5-checked before it is kept."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for name, md5 in MNIST_MD5.items():
        dest = data_dir / f"{name}.gz"
        if dest.exists() and file_digest(dest) == md5:
            log(f"{dest.name}: present, checksum ok")
            continue
        errors = []
        for mirror in mirrors:
            try:
                tmp = _download(mirror + dest.name, dest, timeout)
            except (urllib.error.URLError, OSError) as exc:
                errors.append(f"{mirror}: {exc}")
                continue
            got = file_digest(tmp)
            if got != md5:
                tmp.unlink()
                raise ChecksumError(f"{dest.name} from {mirror}: md5 {got}, expected {md5}")
            os.replace(tmp, dest)
            log(f"{dest.name}: downloaded from {mirror}")
            break
        else:
            raise DownloadError(f"could not download {dest.name}: " + "; ".join(errors))
    return data_dir
