"""Client for the coverage-runner subprocess protocol.

Wire format: 4-byte big-endian length prefix + UTF-8 JSON payload, both
directions. The first exchange is a handshake {"proto": 1}; after that,
one response frame per request frame, in order. The runner enforces
per-test timeouts itself, so reads block until a response or EOF.
"""
from __future__ import annotations

import json
import struct
import subprocess
from dataclasses import dataclass, field

__all__ = [
    "PROTO_VERSION",
    "RunnerError",
    "RunnerCrashedError",
    "RunnerProtocolError",
    "CoverageRequest",
    "RunnerTestResult",
    "CoverageResponse",
    "encode_frame",
    "decode_stream",
    "SubprocessRunner",
]

PROTO_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024


class RunnerError(RuntimeError):
    pass


class RunnerCrashedError(RunnerError):
    """The runner process died or closed its pipe mid-conversation."""


class RunnerProtocolError(RunnerError):
    """The runner answered with an error frame or an invalid frame."""


@dataclass(frozen=True)
class CoverageRequest:
    task_id: str
    program_source: str
    tests: tuple[tuple[int, str], ...]  # (index, code)
    timeout_s: float = 10.0

    def __post_init__(self):
        if not self.tests:
            raise ValueError("tests must be nonempty")
        indices = [i for i, _ in self.tests]
        if len(set(indices)) != len(indices):
            raise ValueError("test indices must be unique")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")

    def to_wire(self) -> dict:
        return {
            "task_id": self.task_id,
            "program_source": self.program_source,
            "tests": [{"index": i, "code": c} for i, c in self.tests],
            "timeout_s": self.timeout_s,
        }


@dataclass(frozen=True)
class RunnerTestResult:
    index: int
    syntax_ok: bool
    exec_ok: bool
    covered_lines: tuple[int, ...]
    covered_branches: tuple[int, ...]


@dataclass(frozen=True)
class CoverageResponse:
    task_id: str
    total_lines: int
    total_branches: int
    per_test: tuple[RunnerTestResult, ...]
    runner_version: str
    diagnostic: str | None = None

    @classmethod
    def from_wire(cls, obj: dict) -> "CoverageResponse":
        try:
            per_test = tuple(
                RunnerTestResult(
                    index=int(t["index"]),
                    syntax_ok=bool(t["syntax_ok"]),
                    exec_ok=bool(t["exec_ok"]),
                    covered_lines=tuple(sorted(int(x) for x in t["covered_lines"])),
                    covered_branches=tuple(sorted(int(x) for x in t["covered_branches"])),
                )
                for t in obj["per_test"]
            )
            return cls(
                task_id=str(obj["task_id"]),
                total_lines=int(obj["total_lines"]),
                total_branches=int(obj["total_branches"]),
                per_test=per_test,
                runner_version=str(obj.get("runner_version", "")),
                diagnostic=obj.get("diagnostic"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RunnerProtocolError(f"invalid coverage response: {exc}") from exc


def encode_frame(obj: dict) -> bytes:
    payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(payload)) + payload


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise RunnerCrashedError("runner closed the pipe")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def decode_stream(stream) -> dict:
    """Read one length-prefixed JSON frame from a binary stream."""
    header = _read_exact(stream, 4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise RunnerProtocolError(f"frame length {length} exceeds limit")
    payload = _read_exact(stream, length)
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RunnerProtocolError(f"undecodable frame: {exc}") from exc


@dataclass
class SubprocessRunner:
    """Owns one runner child process; not thread-safe (one per worker)."""

    cmd: list[str]
    _proc: subprocess.Popen | None = field(default=None, repr=False)
    runner_version: str = ""

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise RunnerCrashedError(f"cannot start runner {self.cmd!r}: {exc}") from exc
        self._send({"proto": PROTO_VERSION})
        reply = self._recv()
        if reply.get("proto") != PROTO_VERSION:
            raise RunnerProtocolError(f"handshake failed: {reply!r}")
        self.runner_version = str(reply.get("runner_version", ""))

    def _send(self, obj: dict) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(encode_frame(obj))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise RunnerCrashedError(f"runner pipe broke: {exc}") from exc

    def _recv(self) -> dict:
        assert self._proc is not None and self._proc.stdout is not None
        return decode_stream(self._proc.stdout)

    def evaluate(self, req: CoverageRequest) -> CoverageResponse:
        if self._proc is None:
            self.start()
        self._send(req.to_wire())
        reply = self._recv()
        if "error" in reply:
            raise RunnerProtocolError(f"runner error: {reply['error']}")
        return CoverageResponse.from_wire(reply)

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)
        except Exception:
            self._proc.kill()
        self._proc = None

    def __enter__(self) -> "SubprocessRunner":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()
