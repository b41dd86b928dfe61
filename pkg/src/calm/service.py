"""Live rollout server for the playground.

One controller session runs at a fixed tick. Clients connect over a
WebSocket, receive one JSON state frame per tick, and may inject
commands; position commands arriving within one tick are coalesced so
only the latest applies. Every applied command is recorded in an event
log, and the whole session replays exactly through ``sim.rollout``.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .alignment import TransitionKernel
from .clustering import ClusterModel
from .controller import ControllerConfig, ControllerState
from .controller import step as controller_step
from .errors import CalmError, InvalidArgumentError
from .io import model_payload
from .sim import is_converged

__all__ = ["build_app", "Session", "CLI_KERNEL_NAMES", "kernel_from_name"]

log = logging.getLogger(__name__)

# External names for the kernel families, used by CLI flags and the
# set_kernel command.
CLI_KERNEL_NAMES = {
    "gradient": "gradient_predict",
    "stable": "stable_forward",
    "backwards": "backwards",
    "periodic": "periodic",
}
_FAMILY_TO_CLI = {v: k for k, v in CLI_KERNEL_NAMES.items()}

COMMAND_KINDS = (
    "start",
    "pause",
    "reset",
    "set_position",
    "drag_offset",
    "set_kernel",
    "set_start",
)

_POSITION_MODES = {"set_position": "set_position", "drag_offset": "offset"}


def kernel_from_name(name: str, **params) -> TransitionKernel:
    """Build a kernel from its external (CLI) name."""
    if name not in CLI_KERNEL_NAMES:
        raise InvalidArgumentError(
            f"unknown kernel {name!r}, expected one of {sorted(CLI_KERNEL_NAMES)}"
        )
    return TransitionKernel(CLI_KERNEL_NAMES[name], **params)


class Session:
    """Mutable state of the single live rollout.

    All mutation happens on the server's event loop, so no locking is
    needed. The recorded ``events`` plus ``start_position`` and the
    kernel/config are sufficient to replay ``positions`` bit for bit
    through ``sim.rollout``.
    """

    def __init__(
        self,
        model: ClusterModel,
        kernel: TransitionKernel,
        cfg: ControllerConfig | None = None,
        start=None,
        tick_ms: int = 50,
        max_ticks: int | None = None,
        convergence_tol: float | None = None,
    ):
        if tick_ms < 1:
            raise InvalidArgumentError(f"tick_ms must be >= 1, got {tick_ms}")
        self.model = model
        self.kernel = kernel
        self.cfg = cfg if cfg is not None else ControllerConfig.from_means(model.means)
        if start is None:
            start = model.means[0].states[0]
        self.start_position = np.asarray(start, dtype=float)
        if self.start_position.shape != (model.dim,):
            raise InvalidArgumentError(
                f"start shape {self.start_position.shape} != ({model.dim},)"
            )
        self.tick_ms = int(tick_ms)
        F_max = max(m.n_states for m in model.means)
        self.budget = int(max_ticks) if max_ticks is not None else 10 * F_max
        self.convergence_tol = convergence_tol
        self.clients: set[WebSocket] = set()
        self.running = False
        self.converged = False
        self.state = ControllerState.initial(self.start_position)
        self.positions: list[list[float]] = []
        self.events: list[dict] = []
        self.mailbox: tuple[str, np.ndarray] | None = None
        self.last_frame = self.snapshot_frame()

    # -- state transitions -------------------------------------------------

    def reset(self) -> None:
        self.running = False
        self.converged = False
        self.state = ControllerState.initial(self.start_position)
        self.positions = []
        self.events = []
        self.mailbox = None
        self.last_frame = self.snapshot_frame()

    def snapshot_frame(self) -> dict:
        """State frame describing the session before any step has run."""
        dim = self.model.dim
        return {
            "type": "state",
            "tick": 0,
            "position": [float(v) for v in self.start_position],
            "velocity": [0.0] * dim,
            "kv": 0.0,
            "active_cluster": 0,
            "posteriors": [
                [1.0 / m.n_states] * m.n_states for m in self.model.means
            ],
            "log_marginals": [0.0] * len(self.model.means),
            "converged": False,
        }

    def step_once(self) -> dict | None:
        """Advance one tick; returns the state frame, or None at budget."""
        tick = len(self.positions)
        if tick >= self.budget:
            self.running = False
            return None
        cmd = self.mailbox
        self.mailbox = None
        if cmd is not None:
            mode, vec = cmd
            pos = vec if mode == "set_position" else self.state.position + vec
            self.state = ControllerState(
                pos, self.state.history, self.state.per_cluster, self.state.active_cluster
            )
            self.events.append(
                {"tick": tick, "mode": mode, "vector": [float(v) for v in vec]}
            )
        observed = self.state.position
        self.state, velocity = controller_step(
            self.state, self.model.means, self.kernel, self.cfg
        )
        self.positions.append([float(v) for v in observed])
        if tick >= 1 and is_converged(
            self.model, self.state, self.kernel, observed, self.convergence_tol
        ):
            self.converged = True
            self.running = False
        self.last_frame = {
            "type": "state",
            "tick": tick,
            "position": [float(v) for v in observed],
            "velocity": [float(v) for v in velocity],
            "kv": float(np.linalg.norm(velocity)),
            "active_cluster": int(self.state.active_cluster),
            "posteriors": [s.scaled_joint.tolist() for s in self.state.per_cluster],
            "log_marginals": [float(s.log_marginal) for s in self.state.per_cluster],
            "converged": self.converged,
        }
        return self.last_frame

    def session_frame(self) -> dict:
        return {
            "type": "session",
            "start": [float(v) for v in self.start_position],
            "kernel": _FAMILY_TO_CLI[self.kernel.family],
            "tick_ms": self.tick_ms,
            "budget": self.budget,
            "running": self.running,
            "tick": len(self.positions),
        }

    def log_payload(self) -> dict:
        k = self.kernel
        c = self.cfg
        return {
            "start": [float(v) for v in self.start_position],
            "kernel": {
                "name": _FAMILY_TO_CLI[k.family],
                "family": k.family,
                "sigma": k.sigma,
                "delta": k.delta,
                "epsilon": k.epsilon,
                "backwards_literal": k.backwards_literal,
            },
            "config": {
                "kv_perturbed": c.kv_perturbed,
                "blend_sigma": c.blend_sigma,
                "control_dt": c.control_dt,
                "grad_floor": c.grad_floor,
                "switch_margin": c.switch_margin,
            },
            "tick_ms": self.tick_ms,
            "budget": self.budget,
            "tick": len(self.positions),
            "running": self.running,
            "converged": self.converged,
            "events": list(self.events),
            "positions": list(self.positions),
        }

    # -- command handling ----------------------------------------------------

    def apply_command(self, kind: str, payload) -> None:
        """Validate and apply one client command.

        Position commands go to the one-slot mailbox (latest wins) and
        take effect at the next tick; control commands act immediately.

        Raises:
            InvalidArgumentError: unknown kind or malformed payload.
        """
        if kind in _POSITION_MODES:
            vec = self._payload_vector(kind, payload)
            self.mailbox = (_POSITION_MODES[kind], vec)
        elif kind == "start":
            if self.converged or len(self.positions) >= self.budget:
                self.reset()
            self.running = True
        elif kind == "pause":
            self.running = False
        elif kind == "reset":
            self.reset()
        elif kind == "set_kernel":
            if not isinstance(payload, str):
                raise InvalidArgumentError("payload: set_kernel expects a kernel name")
            self.kernel = kernel_from_name(
                payload,
                sigma=self.kernel.sigma,
                delta=self.kernel.delta,
                epsilon=self.kernel.epsilon,
                backwards_literal=self.kernel.backwards_literal,
            )
            self.reset()
        elif kind == "set_start":
            self.start_position = self._payload_vector(kind, payload)
            self.reset()
        else:
            raise InvalidArgumentError(
                f"kind: unknown command {kind!r}, expected one of {COMMAND_KINDS}"
            )

    def _payload_vector(self, kind: str, payload) -> np.ndarray:
        try:
            vec = np.asarray(payload, dtype=float)
        except (TypeError, ValueError):
            raise InvalidArgumentError(f"payload: {kind} expects a number list") from None
        if vec.shape != (self.model.dim,):
            raise InvalidArgumentError(
                f"payload: expected {self.model.dim} coordinates, got shape {vec.shape}"
            )
        if not np.all(np.isfinite(vec)):
            raise InvalidArgumentError("payload: coordinates must be finite")
        return vec

    # -- fan-out ---------------------------------------------------------------

    async def broadcast(self, frame: dict) -> None:
        text = json.dumps(frame)
        dead = []
        for ws in self.clients:
            try:
                await ws.send_text(text)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.clients.discard(ws)


async def _ticker(session: Session) -> None:
    while True:
        await asyncio.sleep(session.tick_ms / 1000.0)
        if not session.running:
            continue
        try:
            frame = session.step_once()
        except CalmError as exc:
            session.running = False
            log.warning("session paused on error: %s", exc)
            await session.broadcast({"type": "error", "field": "step", "error": str(exc)})
            continue
        if frame is not None:
            await session.broadcast(frame)


def build_app(
    model: ClusterModel,
    kernel: TransitionKernel | None = None,
    cfg: ControllerConfig | None = None,
    start=None,
    tick_ms: int = 50,
    max_ticks: int | None = None,
    convergence_tol: float | None = None,
) -> FastAPI:
    """Assemble the playground server around one session.

    Endpoints: WebSocket ``/ws`` (state frames out, commands in),
    ``GET /model`` (the model JSON), ``GET /health``, and ``GET /log``
    (start, kernel, config, event log, and position trace for replay).
    """
    if kernel is None:
        kernel = TransitionKernel("stable_forward")
    session = Session(
        model,
        kernel,
        cfg=cfg,
        start=start,
        tick_ms=tick_ms,
        max_ticks=max_ticks,
        convergence_tol=convergence_tol,
    )

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(_ticker(session))
        try:
            yield
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    app = FastAPI(lifespan=lifespan)
    app.state.session = session

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/model")
    def model_endpoint():
        return model_payload(session.model)

    @app.get("/log")
    def log_endpoint():
        return session.log_payload()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session.clients.add(ws)
        try:
            await ws.send_text(json.dumps(session.session_frame()))
            await ws.send_text(json.dumps(session.last_frame))
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(
                        json.dumps(
                            {"type": "error", "field": "<frame>", "error": "not valid JSON"}
                        )
                    )
                    continue
                if not isinstance(msg, dict) or "kind" not in msg:
                    await ws.send_text(
                        json.dumps(
                            {"type": "error", "field": "kind", "error": "missing command kind"}
                        )
                    )
                    continue
                was_reset = msg.get("kind") in ("reset", "set_kernel", "set_start")
                try:
                    session.apply_command(str(msg["kind"]), msg.get("payload"))
                except InvalidArgumentError as exc:
                    text = str(exc)
                    field = text.split(":", 1)[0] if ":" in text else "payload"
                    await ws.send_text(
                        json.dumps({"type": "error", "field": field, "error": text})
                    )
                    continue
                if was_reset:
                    await session.broadcast(session.session_frame())
                    await session.broadcast(session.last_frame)
        except WebSocketDisconnect:
            pass
        finally:
            session.clients.discard(ws)

    return app
