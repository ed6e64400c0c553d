"""HTTP/JSON steering API for sessions (cockpit and scripting surface).

All wire values are in display units; normalized values appear only in the
session log. Long-running evaluations are asynchronous: the POST returns a
pending handle and the client polls, so the formal-evaluation delay never
holds an HTTP connection. Per-session mutations are serialized by a lock.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from .advisor import AdvisorUnavailableError
from .domain import Fidelity, RangeError, DimensionError, pareto_front
from .session import (
    ConfigError,
    InsufficientSeedError,
    Mode,
    ModeForbidsError,
    ModeViolationError,
    SessionClosedError,
    SessionConfig,
    SessionState,
    create_session,
)


@dataclass
class _Evaluation:
    index: int
    status: str = "pending"  # or "done"
    observation_index: int | None = None


@dataclass
class _Managed:
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    evaluations: list[_Evaluation] = field(default_factory=list)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _observation_view(state: SessionState, k: int, pareto_flags: dict[int, bool]) -> dict:
    obs = state.history[k]
    return {
        "index": k,
        "fidelity": obs.fidelity.value,
        "parameters": [float(v) for v in state.app.parameter_space.to_display(obs.point)],
        "objectives": [float(v) for v in state.app.objective_space.to_display(obs.objectives)],
        "iteration": obs.iteration,
        "timestamp": obs.timestamp,
        "pareto": pareto_flags.get(k, False),
    }


def _snapshot(managed: _Managed) -> dict:
    state = managed.state
    app = state.app
    formal_ids = [k for k, o in enumerate(state.history) if o.is_formal]
    pareto_flags: dict[int, bool] = {}
    if formal_ids:
        values = np.stack([state.history[k].objectives for k in formal_ids])
        for local_idx in pareto_front(values):
            pareto_flags[formal_ids[local_idx]] = True
    return {
        "status": state.status.value,
        "mode": state.config.mode.value,
        "app": {
            "id": app.id,
            "description": app.description,
            "parameters": [
                {"name": a.name, "min": a.display_min, "max": a.display_max, "unit": a.unit}
                for a in app.parameter_space.axes
            ],
            "objectives": [
                {"name": a.name, "min": a.display_min, "max": a.display_max, "unit": a.unit}
                for a in app.objective_space.axes
            ],
        },
        "current_sliders": [
            float(v) for v in app.parameter_space.to_display(state.current_sliders)
        ],
        "iteration": state.iteration,
        "history": [_observation_view(state, k, pareto_flags) for k in range(len(state.history))],
        "requests": [
            {
                "request": e.request,
                "index": e.decision.index,
                "reason": e.decision.reason,
                "policy": e.decision.policy.value,
                "fallback": e.decision.fallback,
            }
            for e in state.request_log
        ],
        "evaluations": [
            {"index": ev.index, "status": ev.status, "observation_index": ev.observation_index}
            for ev in managed.evaluations
        ],
    }


def create_app(test_profile: bool = False, extra_apps=None) -> FastAPI:
    """Build the service. ``test_profile`` zeroes evaluation delays."""
    app = FastAPI(title="steerbo steering service")
    sessions: dict[str, _Managed] = {}

    def get(session_id: str) -> _Managed | None:
        return sessions.get(session_id)

    @app.post("/sessions", status_code=201)
    async def create(request: Request):
        body = await request.json()
        try:
            config = SessionConfig.from_dict(body)
            if test_profile:
                config = config.test_profile()
            state = create_session(config, extra_apps=extra_apps)
        except (ConfigError, TypeError, ValueError) as exc:
            return _error(400, "invalid_config", str(exc))
        session_id = secrets.token_hex(8)
        sessions[session_id] = _Managed(state=state)
        return {"id": session_id}

    @app.get("/sessions/{session_id}")
    def snapshot(session_id: str):
        managed = get(session_id)
        if managed is None:
            return _error(404, "unknown_session", session_id)
        with managed.lock:
            return _snapshot(managed)

    @app.post("/sessions/{session_id}/propose")
    def propose(session_id: str, body: dict):
        managed = get(session_id)
        if managed is None:
            return _error(404, "unknown_session", session_id)
        request_text = str(body.get("request", ""))
        with managed.lock:
            state = managed.state
            try:
                candidate, decision = state.propose(request_text)
            except InsufficientSeedError as exc:
                return _error(409, "insufficient_seed", str(exc))
            except ModeForbidsError as exc:
                return _error(409, "mode_forbids", str(exc))
            except SessionClosedError as exc:
                return _error(409, "session_closed", str(exc))
            except AdvisorUnavailableError as exc:
                return _error(502, "advisor_unavailable", str(exc))
            return {
                "parameters": [
                    float(v)
                    for v in state.app.parameter_space.to_display(candidate.point)
                ],
                "index": decision.index,
                "reason": decision.reason,
                "policy": decision.policy.value,
                "fallback": decision.fallback,
                "acquisition_value": candidate.acquisition_value,
            }

    @app.post("/sessions/{session_id}/evaluate")
    def evaluate(session_id: str, body: dict):
        managed = get(session_id)
        if managed is None:
            return _error(404, "unknown_session", session_id)
        state = managed.state
        try:
            fidelity = Fidelity(body.get("fidelity", "informal"))
            point = state.app.parameter_space.from_display(
                np.asarray(body["parameters"], dtype=float)
            )
        except (KeyError, ValueError, DimensionError, RangeError) as exc:
            return _error(400, "invalid_parameters", str(exc))

        handle = _Evaluation(index=len(managed.evaluations))
        managed.evaluations.append(handle)

        def run() -> Response | dict | None:
            with managed.lock:
                try:
                    state.submit_evaluation(point, fidelity)
                except ModeViolationError as exc:
                    handle.status = "rejected"
                    return _error(409, "mode_forbids", str(exc))
                except SessionClosedError as exc:
                    handle.status = "rejected"
                    return _error(409, "session_closed", str(exc))
                handle.observation_index = len(state.history) - 1
                handle.status = "done"
                flags = {handle.observation_index: False}
                return _observation_view(state, handle.observation_index, flags)

        if state.simulator.delay(fidelity) <= 0:
            result = run()
            if isinstance(result, Response):
                return result
            return {"status": "done", "evaluation": handle.index, "observation": result}
        threading.Thread(target=run, daemon=True).start()
        return JSONResponse(
            status_code=202, content={"status": "pending", "evaluation": handle.index}
        )

    @app.get("/sessions/{session_id}/evaluations/{k}")
    def evaluation_status(session_id: str, k: int):
        managed = get(session_id)
        if managed is None:
            return _error(404, "unknown_session", session_id)
        if k < 0 or k >= len(managed.evaluations):
            return _error(404, "unknown_evaluation", str(k))
        handle = managed.evaluations[k]
        if handle.status != "done":
            return {"status": handle.status, "evaluation": k}
        with managed.lock:
            view = _observation_view(managed.state, handle.observation_index, {})
        return {"status": "done", "evaluation": k, "observation": view}

    @app.post("/sessions/{session_id}/sliders", status_code=204)
    def sliders(session_id: str, body: dict):
        managed = get(session_id)
        if managed is None:
            return _error(404, "unknown_session", session_id)
        with managed.lock:
            state = managed.state
            try:
                point = state.app.parameter_space.from_display(
                    np.asarray(body["parameters"], dtype=float)
                )
                state.set_sliders(point)
            except ModeForbidsError as exc:
                return _error(409, "mode_forbids", str(exc))
            except (KeyError, ValueError, DimensionError, RangeError) as exc:
                return _error(400, "invalid_parameters", str(exc))
        return Response(status_code=204)

    @app.get("/sessions/{session_id}/log")
    def log(session_id: str):
        managed = get(session_id)
        if managed is None:
            return _error(404, "unknown_session", session_id)
        with managed.lock:
            text = "\n".join(managed.state.records())
        return PlainTextResponse(text + "\n" if text else "")

    return app


def serve(host: str = "127.0.0.1", port: int = 8711, test_profile: bool = False):
    import uvicorn

    uvicorn.run(create_app(test_profile=test_profile), host=host, port=port, log_level="warning")
