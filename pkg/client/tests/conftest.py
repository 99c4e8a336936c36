"""Client-SDK test harness.

The environment service is consumed strictly through its external
interfaces: the `jigsawenv` CLI (subprocess) starts servers and exports
fixtures; everything else goes over HTTP.
"""

import json
import signal
import subprocess
import sys

import pytest


def start_server(extra_args=()):
    proc = subprocess.Popen(
        [sys.executable, "-m", "jigsawenv.cli", "serve",
         "--host", "127.0.0.1", "--tcp-port", "0", "--http-port", "0",
         *extra_args],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = proc.stderr.readline().strip()  # "tcp://h:p  http://h:p"
    if not line.startswith("tcp://"):
        proc.kill()
        raise RuntimeError(f"server did not start: {line!r}")
    http_addr = line.split()[1][len("http://"):]
    return proc, http_addr


def stop_server(proc):
    proc.send_signal(signal.SIGTERM)
    try:
        proc.wait(timeout=15)
    except subprocess.TimeoutExpired:
        proc.kill()


@pytest.fixture(scope="session")
def server_addr():
    proc, addr = start_server()
    yield addr
    stop_server(proc)


@pytest.fixture(scope="session")
def slow_server_addr():
    proc, addr = start_server(["--step-delay-ms", "250"])
    yield addr
    stop_server(proc)


@pytest.fixture(scope="session")
def fixtures(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures") / "fixtures.json"
    subprocess.run(
        [sys.executable, "-m", "jigsawenv.cli", "fixtures",
         "--out", str(out), "--count", "20", "--seed", "77"],
        check=True,
        capture_output=True,
    )
    return json.loads(out.read_text())["fixtures"]
