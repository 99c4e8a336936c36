"""Network service exposing the environment over two equivalent transports.

Transport 1: JSON-per-line over TCP. Each request line is
    {"v": 1, "op": "...", "episode_id": "...", "payload": {...}}
and each response line mirrors {"v": 1, "ok": ..., ...}.

Transport 2: HTTP mapping onto the same engine calls:
    POST   /episodes            -> new_episode   (body = payload)
    POST   /episodes/{id}/step  -> step
    GET    /episodes/{id}       -> state
    DELETE /episodes/{id}       -> abort
    GET    /health              -> health

The wire layer adds no semantics: an episode driven over either transport
is pixel- and reward-identical to an in-process episode with the same
(image, m, level, seed, T). Overlapping steps on one episode are rejected
with a retriable "busy" error; distinct episodes proceed independently.
"""

import base64
import contextlib
import json
import os
import socket
import socketserver
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, List, Optional, Tuple

from . import __version__
from .config import RunConfig, config_hash
from .episode import ANSWERED, RUNNING, TRUNCATED, Episode, abort as abort_episode, new_episode, step as step_episode
from .errors import (
    BindError,
    ConfigError,
    EpisodeBusy,
    EpisodeFinished,
    JigsawError,
    UndecodableImage,
)
from .imageops import PixelImage, from_png_bytes, load_image

WIRE_VERSION = 1


@dataclass
class _Slot:
    episode: Episode
    permit: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class EpisodeManager:
    """Owns live episodes: creation, per-episode step permits, TTL reaping."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._slots: Dict[str, _Slot] = {}
        self._registry_lock = threading.Lock()
        self._corpus_paths: List[str] = []
        corpus = cfg.server.corpus_dir
        if corpus:
            if not os.path.isdir(corpus):
                raise ConfigError(f"corpus_dir does not exist: {corpus}")
            for root, _, files in sorted(os.walk(corpus)):
                for name in sorted(files):
                    if name.lower().endswith((".png", ".jpg", ".jpeg", ".bmp")):
                        self._corpus_paths.append(os.path.join(root, name))

    def _source_image(self, payload: dict) -> PixelImage:
        if payload.get("image_b64"):
            try:
                return from_png_bytes(base64.b64decode(payload["image_b64"]))
            except (ValueError, UndecodableImage) as exc:
                raise JigsawError(f"bad image_b64: {exc}") from exc
        if payload.get("image_path"):
            rel = payload["image_path"]
            corpus = self.cfg.server.corpus_dir
            if not corpus:
                raise JigsawError("server has no corpus; send image_b64")
            full = os.path.normpath(os.path.join(corpus, rel))
            if not full.startswith(os.path.normpath(corpus) + os.sep):
                raise JigsawError(f"image_path escapes the corpus: {rel!r}")
            return load_image(full)
        if self._corpus_paths:
            index = int(payload["seed"]) % len(self._corpus_paths)
            return load_image(self._corpus_paths[index])
        raise JigsawError("no image source: send image_b64 or configure a corpus")

    def create(self, payload: dict) -> Episode:
        if self.count() >= self.cfg.server.max_episodes:
            self.reap()
        try:
            m = int(payload["m"])
            level = int(payload["level"])
            seed = int(payload["seed"])
        except (KeyError, TypeError, ValueError) as exc:
            raise JigsawError(f"payload needs integer m, level, seed: {exc!r}") from exc
        T = int(payload.get("T", self.cfg.server.default_T))
        episode = new_episode(
            self._source_image(payload),
            m=m,
            level=level,
            seed=seed,
            T=T,
            reward_cfg=self.cfg.reward,
            ep_cfg=self.cfg.episode,
            episode_id=f"ep-{uuid.uuid4().hex[:12]}",
        )
        with self._registry_lock:
            if len(self._slots) >= self.cfg.server.max_episodes:
                raise JigsawError(
                    f"episode limit reached ({self.cfg.server.max_episodes})"
                )
            self._slots[episode.id] = _Slot(episode=episode)
        return episode

    def get(self, episode_id: str) -> _Slot:
        with self._registry_lock:
            slot = self._slots.get(episode_id)
        if slot is None:
            raise KeyError(episode_id)
        slot.last_access = time.monotonic()
        return slot

    @contextlib.contextmanager
    def step_permit(self, episode_id: str):
        """Exclusive permit for stepping one episode; raises EpisodeBusy when
        another step is in flight. Distinct episodes are independent."""
        slot = self.get(episode_id)
        if not slot.permit.acquire(blocking=False):
            raise EpisodeBusy(f"episode {episode_id} is busy")
        try:
            yield slot
        finally:
            slot.permit.release()

    def abort(self, episode_id: str) -> Episode:
        slot = self.get(episode_id)
        with slot.permit:  # waits for any in-flight step to finish first
            abort_episode(slot.episode)
        return slot.episode

    def reap(self) -> int:
        """Drop episodes idle longer than the TTL; returns how many."""
        cutoff = time.monotonic() - self.cfg.server.ttl_seconds
        with self._registry_lock:
            stale = [eid for eid, s in self._slots.items() if s.last_access < cutoff]
            for eid in stale:
                del self._slots[eid]
        return len(stale)

    def count(self) -> int:
        with self._registry_lock:
            return len(self._slots)


def _png_b64(img: PixelImage) -> str:
    return base64.b64encode(img.to_png_bytes()).decode("ascii")


def _images_payload(named: List[Tuple[str, PixelImage]]) -> List[dict]:
    return [{"name": name, "png_base64": _png_b64(img)} for name, img in named]


class ServiceCore:
    """Transport-agnostic request handling; both servers call into this."""

    def __init__(self, cfg: Optional[RunConfig] = None):
        self.cfg = cfg or RunConfig()
        self.manager = EpisodeManager(self.cfg)
        self._config_hash = config_hash(self.cfg)
        self._inflight = 0
        self._inflight_lock = threading.Lock()

    @contextlib.contextmanager
    def _track_inflight(self):
        with self._inflight_lock:
            self._inflight += 1
        try:
            yield
        finally:
            with self._inflight_lock:
                self._inflight -= 1

    @property
    def inflight(self) -> int:
        with self._inflight_lock:
            return self._inflight

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        episode_id = request.get("episode_id")
        payload = request.get("payload") or {}
        try:
            if request.get("v", WIRE_VERSION) != WIRE_VERSION:
                return self._err(episode_id, f"unsupported wire version {request.get('v')!r}")
            if op == "health":
                return self._ok(
                    None,
                    status="healthy",
                    version=__version__,
                    config_hash=self._config_hash,
                    episodes=self.manager.count(),
                )
            if op == "new_episode":
                return self._new_episode(payload)
            if op == "step":
                return self._step(episode_id, payload)
            if op == "state":
                return self._state(episode_id)
            if op == "abort":
                return self._abort(episode_id)
            return self._err(episode_id, f"unknown op {op!r}")
        except KeyError:
            return self._err(episode_id, f"unknown episode {episode_id!r}")
        except EpisodeBusy as exc:
            return self._err(episode_id, str(exc), retriable=True, busy=True)
        except EpisodeFinished as exc:
            return self._err(episode_id, f"episode finished: {exc}")
        except JigsawError as exc:
            return self._err(episode_id, str(exc))

    def _ok(self, episode_id, **extra) -> dict:
        doc = {"v": WIRE_VERSION, "ok": True}
        if episode_id is not None:
            doc["episode_id"] = episode_id
        doc.update(extra)
        return doc

    def _err(self, episode_id, message: str, **extra) -> dict:
        doc = {"v": WIRE_VERSION, "ok": False, "error": message}
        if episode_id is not None:
            doc["episode_id"] = episode_id
        doc.update(extra)
        return doc

    def _new_episode(self, payload: dict) -> dict:
        ep = self.manager.create(payload)
        tiles = [(label, ep.registry[label]) for label in ep.labels]
        return self._ok(
            ep.id,
            status=ep.status,
            t=ep.t,
            T=ep.T,
            m=ep.m,
            level=ep.level,
            seed=ep.seed,
            labels=list(ep.labels),
            prompts={"system": ep.messages[0].text, "user": ep.messages[1].text},
            images=_images_payload(tiles),
            config={
                "reward_config": {
                    "alpha": ep.reward_cfg.alpha,
                    "beta_fmt": ep.reward_cfg.beta_fmt,
                    "gamma": ep.reward_cfg.gamma,
                    "lam": ep.reward_cfg.lam,
                    "step_max": ep.reward_cfg.step_max,
                },
                "episode_config": {
                    "max_feedback_side": ep.ep_cfg.max_feedback_side,
                    "step_count_mode": ep.ep_cfg.step_count_mode,
                },
            },
        )

    def _step(self, episode_id: Optional[str], payload: dict) -> dict:
        if episode_id is None:
            return self._err(None, "step requires an episode_id")
        text = payload.get("text")
        if not isinstance(text, str):
            return self._err(episode_id, "step payload needs a 'text' string")
        with self._track_inflight(), self.manager.step_permit(episode_id) as slot:
            if self.cfg.server.step_delay_ms:
                time.sleep(self.cfg.server.step_delay_ms / 1000.0)
            outcome = step_episode(slot.episode, text)
        ep = slot.episode
        doc = self._ok(
            episode_id,
            status=ep.status,
            outcome=outcome.status,
            t=ep.t,
            feedback_text=outcome.feedback_text,
            images=_images_payload(outcome.new_images),
        )
        if outcome.reward is not None:
            doc["reward"] = outcome.reward.to_dict()
        return doc

    def _state(self, episode_id: Optional[str]) -> dict:
        if episode_id is None:
            return self._err(None, "state requires an episode_id")
        ep = self.manager.get(episode_id).episode
        doc = self._ok(
            episode_id,
            status=ep.status,
            t=ep.t,
            T=ep.T,
            m=ep.m,
            level=ep.level,
            seed=ep.seed,
        )
        if ep.status in (ANSWERED, TRUNCATED):
            doc["gt_labels"] = list(ep.gt)
            doc["score"] = ep.score
            doc["answer_labels"] = list(ep.answer) if ep.answer else None
            doc["warnings"] = list(ep.warnings)
            if ep.reward is not None:
                doc["reward"] = ep.reward.to_dict()
        return doc

    def _abort(self, episode_id: Optional[str]) -> dict:
        if episode_id is None:
            return self._err(None, "abort requires an episode_id")
        ep = self.manager.abort(episode_id)
        return self._ok(episode_id, status=ep.status)


# --- TCP line transport -------------------------------------------------------


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        core: ServiceCore = self.server.core  # type: ignore[attr-defined]
        while True:
            line = self.rfile.readline()
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                response = {"v": WIRE_VERSION, "ok": False, "error": f"bad request line: {exc}"}
            else:
                response = core.handle(request)
            data = json.dumps(response, sort_keys=True).encode("utf-8") + b"\n"
            try:
                self.wfile.write(data)
                self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


# --- HTTP transport --------------------------------------------------------------


class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet by default; logs go to stderr via CLI
        pass

    @property
    def core(self) -> ServiceCore:
        return self.server.core  # type: ignore[attr-defined]

    def _read_payload(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        body = self.rfile.read(length)
        try:
            doc = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return {"__bad__": True}
        return doc if isinstance(doc, dict) else {"__bad__": True}

    def _send(self, response: dict, status: Optional[int] = None):
        if status is None:
            if response.get("ok"):
                status = 200
            elif response.get("busy"):
                status = 409
            elif "unknown episode" in str(response.get("error", "")):
                status = 404
            else:
                status = 400
        data = json.dumps(response, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, op: str, episode_id: Optional[str], payload: dict):
        if payload.pop("__bad__", None):
            self._send({"v": WIRE_VERSION, "ok": False, "error": "request body is not a JSON object"})
            return
        self._send(self.core.handle({"v": WIRE_VERSION, "op": op, "episode_id": episode_id, "payload": payload}))

    def do_GET(self):
        parts = [p for p in self.path.split("/") if p]
        if parts == ["health"]:
            self._dispatch("health", None, {})
        elif len(parts) == 2 and parts[0] == "episodes":
            self._dispatch("state", parts[1], {})
        else:
            self._send({"v": WIRE_VERSION, "ok": False, "error": f"no route GET {self.path}"}, status=404)

    def do_POST(self):
        parts = [p for p in self.path.split("/") if p]
        if parts == ["episodes"]:
            self._dispatch("new_episode", None, self._read_payload())
        elif len(parts) == 3 and parts[0] == "episodes" and parts[2] == "step":
            self._dispatch("step", parts[1], self._read_payload())
        else:
            self._send({"v": WIRE_VERSION, "ok": False, "error": f"no route POST {self.path}"}, status=404)

    def do_DELETE(self):
        parts = [p for p in self.path.split("/") if p]
        if len(parts) == 2 and parts[0] == "episodes":
            self._dispatch("abort", parts[1], {})
        else:
            self._send({"v": WIRE_VERSION, "ok": False, "error": f"no route DELETE {self.path}"}, status=404)


class _HttpServer(ThreadingHTTPServer):
    daemon_threads = True


# --- service orchestration ----------------------------------------------------------


class EnvService:
    """Runs the TCP and HTTP transports over one ServiceCore."""

    def __init__(self, cfg: Optional[RunConfig] = None):
        self.cfg = cfg or RunConfig()
        self.core = ServiceCore(self.cfg)
        self._tcp: Optional[_TcpServer] = None
        self._http: Optional[_HttpServer] = None
        self._threads: List[threading.Thread] = []
        self._reaper_stop = threading.Event()

    def start(self) -> "EnvService":
        host = self.cfg.server.host
        try:
            self._tcp = _TcpServer((host, self.cfg.server.tcp_port), _LineHandler)
            self._http = _HttpServer((host, self.cfg.server.http_port), _HttpHandler)
        except OSError as exc:
            self.stop()
            raise BindError(f"cannot bind service sockets: {exc}") from exc
        self._tcp.core = self.core  # type: ignore[attr-defined]
        self._http.core = self.core  # type: ignore[attr-defined]
        for server in (self._tcp, self._http):
            thread = threading.Thread(target=server.serve_forever, daemon=True)
            thread.start()
            self._threads.append(thread)
        reaper = threading.Thread(target=self._reap_loop, daemon=True)
        reaper.start()
        self._threads.append(reaper)
        return self

    def _reap_loop(self):
        interval = min(60.0, max(1.0, self.cfg.server.ttl_seconds / 4))
        while not self._reaper_stop.wait(interval):
            self.core.manager.reap()

    @property
    def tcp_address(self) -> Tuple[str, int]:
        return self._tcp.server_address[:2]

    @property
    def http_address(self) -> Tuple[str, int]:
        return self._http.server_address[:2]

    def stop(self, drain_timeout: float = 10.0):
        """Let in-flight steps finish (up to drain_timeout), then shut down."""
        deadline = time.monotonic() + drain_timeout
        while self.core.inflight > 0 and time.monotonic() < deadline:
            time.sleep(0.01)
        self._reaper_stop.set()
        for server in (self._tcp, self._http):
            if server is not None:
                server.shutdown()
                server.server_close()
        self._tcp = self._http = None


def serve(cfg: Optional[RunConfig] = None) -> EnvService:
    """Start the service; caller is responsible for stop()."""
    return EnvService(cfg).start()


# --- minimal line-protocol client (loopback testing) ---------------------------------


class LineClient:
    """Tiny blocking JSON-lines client used by tests and the CLI."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def call(self, op: str, episode_id: Optional[str] = None, payload: Optional[dict] = None) -> dict:
        request = {"v": WIRE_VERSION, "op": op}
        if episode_id is not None:
            request["episode_id"] = episode_id
        if payload is not None:
            request["payload"] = payload
        self._file.write(json.dumps(request).encode("utf-8") + b"\n")
        self._file.flush()
        line = self._file.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return json.loads(line.decode("utf-8"))

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()
