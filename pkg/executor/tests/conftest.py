import json
import subprocess
import sys

import pytest


def start_service(*args):
    return subprocess.Popen(
        [sys.executable, "-m", "potexec", *args],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL, text=True, bufsize=1)


@pytest.fixture()
def service():
    procs = []

    def launch(*args):
        proc = start_service(*args)
        procs.append(proc)
        return proc

    yield launch
    for proc in procs:
        proc.kill()
        proc.wait()


def send_raw(proc, line):
    proc.stdin.write(line + "\n")
    proc.stdin.flush()


def read_result(proc):
    line = proc.stdout.readline()
    assert line, "service closed its output stream"
    return json.loads(line)


def ask(proc, code, rid=1, timeout_ms=10_000):
    send_raw(proc, json.dumps({"id": rid, "code": code,
                               "timeout_ms": timeout_ms}))
    return read_result(proc)
