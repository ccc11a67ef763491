import functools
import gzip
import hashlib
import http.server
import threading

import pytest

from vaemhn import fetch


@pytest.fixture
def server(tmp_path, monkeypatch):
    """Serve four small gz archives over HTTP and register their md5s."""
    root = tmp_path / "srv"
    root.mkdir()
    md5 = {}
    for k, name in enumerate(fetch.MNIST_MD5):
        blob = gzip.compress(bytes([k]) * 64, mtime=0)
        (root / f"{name}.gz").write_bytes(blob)
        md5[name] = hashlib.md5(blob).hexdigest()
    monkeypatch.setattr(fetch, "MNIST_MD5", md5)
    handler = functools.partial(http.server.SimpleHTTPRequestHandler, directory=str(root))
    handler.log_message = lambda *a: None
    httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    yield root, f"http://127.0.0.1:{httpd.server_address[1]}/"
    httpd.shutdown()


def test_download_verifies_and_rerun_is_noop(server, tmp_path):
    root, url = server
    dest = tmp_path / "data"
    logs = []
    fetch.fetch_mnist(dest, mirrors=(url,), log=logs.append)
    assert all("downloaded" in line for line in logs)
    for name in fetch.MNIST_MD5:
        assert (dest / f"{name}.gz").read_bytes() == (root / f"{name}.gz").read_bytes()
    logs.clear()
    fetch.fetch_mnist(dest, mirrors=("http://127.0.0.1:9/",), log=logs.append)
    assert all("present" in line for line in logs)
    assert fetch.identify(dest) == "mnist"


def test_corrupted_download_is_refused(server, tmp_path):
    root, url = server
    target = root / "t10k-images-idx3-ubyte.gz"
    blob = bytearray(target.read_bytes())
    blob[-5] ^= 0xFF
    target.write_bytes(bytes(blob))
    dest = tmp_path / "data"
    with pytest.raises(fetch.ChecksumError):
        fetch.fetch_mnist(dest, mirrors=(url,), log=lambda *_: None)
    assert not (dest / "t10k-images-idx3-ubyte.gz").exists()
    assert not list(dest.glob("*.part"))

