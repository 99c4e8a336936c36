"""Synchronous blocking client for the jigsaw environment HTTP mapping.

One `JigsawClient` serves many episodes; each episode gets its own
`ClientEpisodeHandle` that mirrors the server's status transitions and must
not be stepped concurrently (the server answers a retriable busy error if
it is, and the client backs off and retries automatically).

The client holds no environment logic: every semantic comes from the server.
"""

import base64
import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .images import b64_to_pixels
from .recorder import TrajectoryRecorder

WIRE_VERSION = 1


class ServerError(Exception):
    """The server answered ok=false; carries the full response payload."""

    def __init__(self, payload: dict):
        super().__init__(payload.get("error", "server error"))
        self.payload = payload


class ProtocolVersionMismatch(Exception):
    pass


@dataclass
class StepResult:
    status: str            # server episode status: running/answered/truncated
    outcome: str           # turn outcome: continue/error/done/truncated
    feedback_text: str
    images: Dict[str, np.ndarray]
    reward: Optional[dict]
    t: int


@dataclass
class ClientEpisodeHandle:
    episode_id: str
    m: int
    level: int
    seed: int
    T: int
    labels: List[str]
    prompts: Dict[str, str]
    tiles: Dict[str, np.ndarray]
    status: str
    last_result: Optional[StepResult] = None
    recorder: Optional[TrajectoryRecorder] = None
    _client: "JigsawClient" = field(default=None, repr=False)


class JigsawClient:
    """HTTP client with per-call timeout and busy retry/backoff."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        max_retries: int = 8,
        backoff_base: float = 0.05,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.busy_retries = 0  # exposed for tests/telemetry

    # -- transport ----------------------------------------------------------

    def _request_once(self, method: str, path: str, payload: Optional[dict]) -> dict:
        data = json.dumps(payload).encode("utf-8") if payload is not None else None
        request = urllib.request.Request(
            f"{self.base_url}{path}", data=data, method=method
        )
        if data is not None:
            request.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as fh:
                body = fh.read()
        except urllib.error.HTTPError as exc:
            body = exc.read()
        except urllib.error.URLError as exc:
            raise ConnectionError(f"{method} {path}: {exc.reason}") from exc
        try:
            doc = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConnectionError(f"{method} {path}: undecodable response") from exc
        if doc.get("v") != WIRE_VERSION:
            raise ProtocolVersionMismatch(
                f"server speaks wire version {doc.get('v')!r}, client {WIRE_VERSION}"
            )
        return doc

    def _request(self, method: str, path: str, payload: Optional[dict] = None) -> dict:
        attempt = 0
        while True:
            doc = self._request_once(method, path, payload)
            if doc.get("ok"):
                return doc
            if doc.get("busy") and attempt < self.max_retries:
                self.busy_retries += 1
                time.sleep(self.backoff_base * (2**attempt))
                attempt += 1
                continue
            raise ServerError(doc)

    def health(self) -> dict:
        return self._request("GET", "/health")

    # -- episode lifecycle -----------------------------------------------------

    def new_episode(
        self,
        m: int,
        level: int,
        seed: int,
        T: Optional[int] = None,
        image_b64: Optional[str] = None,
        image_path: Optional[str] = None,
        record: bool = False,
    ) -> ClientEpisodeHandle:
        payload = {"m": m, "level": level, "seed": seed}
        if T is not None:
            payload["T"] = T
        if image_b64 is not None:
            payload["image_b64"] = image_b64
        if image_path is not None:
            payload["image_path"] = image_path
        doc = self._request("POST", "/episodes", payload)
        tiles = {img["name"]: b64_to_pixels(img["png_base64"]) for img in doc["images"]}
        recorder = None
        if record:
            recorder = TrajectoryRecorder(doc, source_png=(
                base64.b64decode(image_b64) if image_b64 else None
            ))
        return ClientEpisodeHandle(
            episode_id=doc["episode_id"],
            m=doc["m"],
            level=doc["level"],
            seed=doc["seed"],
            T=doc["T"],
            labels=list(doc["labels"]),
            prompts=dict(doc["prompts"]),
            tiles=tiles,
            status=doc["status"],
            recorder=recorder,
            _client=self,
        )

    def step(self, handle: ClientEpisodeHandle, text: str) -> StepResult:
        doc = self._request(
            "POST", f"/episodes/{handle.episode_id}/step", {"text": text}
        )
        images = {img["name"]: b64_to_pixels(img["png_base64"]) for img in doc["images"]}
        result = StepResult(
            status=doc["status"],
            outcome=doc["outcome"],
            feedback_text=doc["feedback_text"],
            images=images,
            reward=doc.get("reward"),
            t=doc["t"],
        )
        handle.status = result.status
        handle.last_result = result
        if handle.recorder is not None:
            handle.recorder.record_turn(
                text,
                doc,
                raw_images={img["name"]: img["png_base64"] for img in doc["images"]},
            )
            if result.status in ("answered", "truncated"):
                handle.recorder.record_terminal(self.state(handle))
        return result

    def state(self, handle: ClientEpisodeHandle) -> dict:
        doc = self._request("GET", f"/episodes/{handle.episode_id}")
        handle.status = doc["status"]
        return doc

    def close(self, handle: ClientEpisodeHandle) -> dict:
        doc = self._request("DELETE", f"/episodes/{handle.episode_id}")
        handle.status = doc["status"]
        return doc


def connect(addr: str, timeout: float = 30.0, **kw) -> JigsawClient:
    """addr is 'host:port' or a full http URL of the environment service."""
    base = addr if addr.startswith("http") else f"http://{addr}"
    client = JigsawClient(base, timeout=timeout, **kw)
    client.health()
    return client


def new_episode(client: JigsawClient, **kw) -> ClientEpisodeHandle:
    return client.new_episode(**kw)


def step(handle: ClientEpisodeHandle, text: str) -> StepResult:
    return handle._client.step(handle, text)


def close(handle: ClientEpisodeHandle) -> dict:
    return handle._client.close(handle)
