"""Stateful optimization sessions: seeding, proposals, evaluation, persistence.

A session is a serial state machine over one synthetic app. The first
``n_seed`` formal evaluations come from seeded random points; system proposals
are locked out until ``proposal_lockout`` formal observations exist. Only
formal observations ever reach the surrogate models. Every event appends one
self-describing JSON record to the session log, and a log replays into an
equivalent session (identical model fits, identical re-persisted bytes).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from . import advisor as advisor_mod
from .acquisition import (
    AcquisitionOptions,
    Candidate,
    CandidateBatch,
    default_reference_point,
    generate_batch,
)
from .advisor import AdvisorDecision, AdvisorEndpointConfig, AdvisorPolicy
from .domain import Fidelity, Observation
from .surrogate import GaussianProcessModel, PosteriorPrediction, fit
from .testbed import (
    FORMAL_DELAY_S,
    FORMAL_NOISE_HALFWIDTH,
    INFORMAL_DELAY_S,
    INFORMAL_NOISE_HALFWIDTH,
    EvaluationSimulator,
    SyntheticApp,
    app_by_id,
    simulate_evaluation,
)

LOG_SCHEMA_VERSION = 1


class Mode(str, Enum):
    DESIGNER_LED = "designer_led"
    BO_LED = "bo_led"
    COOPERATIVE = "cooperative"


class Status(str, Enum):
    SEEDING = "seeding"
    ACTIVE = "active"
    CLOSED = "closed"


class ConfigError(ValueError):
    pass


class ModeViolationError(RuntimeError):
    """Slider/evaluation input conflicts with the session mode."""


class ModeForbidsError(RuntimeError):
    """The requested operation is disabled in this mode."""


class InsufficientSeedError(RuntimeError):
    """Proposals are locked out until enough formal observations exist."""


class SessionClosedError(RuntimeError):
    pass


class SessionLogError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"session log line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class SessionConfig:
    app_id: str = "app1"
    mode: Mode = Mode.COOPERATIVE
    q: int = 8
    n_seed: int = 5
    proposal_lockout: int = 5
    rng_seed: int = 0
    formal_noise_halfwidth: float = FORMAL_NOISE_HALFWIDTH
    informal_noise_halfwidth: float = INFORMAL_NOISE_HALFWIDTH
    formal_delay: float = FORMAL_DELAY_S
    informal_delay: float = INFORMAL_DELAY_S
    advisor_policy: AdvisorPolicy = AdvisorPolicy.SCRIPTED
    endpoint: AdvisorEndpointConfig | None = None
    seed_method: str = "random"  # or "latin_hypercube"
    n_mc: int = 128
    fit_restarts: int = 8

    def __post_init__(self):
        if self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.n_seed < 2:
            raise ConfigError("n_seed must be >= 2")
        if self.proposal_lockout < 0:
            raise ConfigError("proposal_lockout must be >= 0")
        if self.seed_method not in ("random", "latin_hypercube"):
            raise ConfigError(f"unknown seed_method {self.seed_method!r}")
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "advisor_policy", AdvisorPolicy(self.advisor_policy))

    def test_profile(self) -> "SessionConfig":
        """Same config with delays zeroed (automated runs must not sleep)."""
        return replace(self, formal_delay=0.0, informal_delay=0.0)

    def to_dict(self) -> dict:
        d = {
            "app_id": self.app_id,
            "mode": self.mode.value,
            "q": self.q,
            "n_seed": self.n_seed,
            "proposal_lockout": self.proposal_lockout,
            "rng_seed": self.rng_seed,
            "formal_noise_halfwidth": self.formal_noise_halfwidth,
            "informal_noise_halfwidth": self.informal_noise_halfwidth,
            "formal_delay": self.formal_delay,
            "informal_delay": self.informal_delay,
            "advisor_policy": self.advisor_policy.value,
            "seed_method": self.seed_method,
            "n_mc": self.n_mc,
            "fit_restarts": self.fit_restarts,
        }
        if self.endpoint is not None:
            d["endpoint"] = {
                "base_url": self.endpoint.base_url,
                "model_name": self.endpoint.model_name,
                "api_key_env_var": self.endpoint.api_key_env_var,
                "timeout": self.endpoint.timeout,
                "max_retries": self.endpoint.max_retries,
            }
        return d

    @staticmethod
    def from_dict(d: dict) -> "SessionConfig":
        endpoint = None
        if d.get("endpoint"):
            endpoint = AdvisorEndpointConfig(**d["endpoint"])
        known = {
            k: d[k]
            for k in (
                "app_id", "mode", "q", "n_seed", "proposal_lockout", "rng_seed",
                "formal_noise_halfwidth", "informal_noise_halfwidth",
                "formal_delay", "informal_delay", "advisor_policy",
                "seed_method", "n_mc", "fit_restarts",
            )
            if k in d
        }
        return SessionConfig(endpoint=endpoint, **known)


@dataclass
class RequestLogEntry:
    request: str
    prompt_text: str
    decision: AdvisorDecision
    batch: CandidateBatch


class SessionState:
    """One designer's optimization session. Mutating calls must be serialized
    by the caller (the HTTP service uses a per-session lock)."""

    def __init__(
        self,
        config: SessionConfig,
        app: SyntheticApp,
        seeds: np.ndarray,
        clock: Callable[[], float] = time.time,
        log_path: str | Path | None = None,
    ):
        self.config = config
        self.app = app
        self.seeds = seeds
        self.clock = clock
        self.history: list[Observation] = []
        self.request_log: list[RequestLogEntry] = []
        self.models: list[GaussianProcessModel] | None = None
        self.current_sliders: np.ndarray = seeds[0].copy()
        self.last_proposal: Candidate | None = None
        self.proposal_count = 0
        self.closed = False
        self.reference_point = default_reference_point(app.m)
        self.simulator = EvaluationSimulator(
            formal_noise_halfwidth=config.formal_noise_halfwidth,
            informal_noise_halfwidth=config.informal_noise_halfwidth,
            formal_delay=config.formal_delay,
            informal_delay=config.informal_delay,
            rng_seed=np.random.SeedSequence(config.rng_seed, spawn_key=(1,)),
        )
        self._records: list[str] = []
        self._log_path = Path(log_path) if log_path is not None else None
        if self._log_path is not None:
            self._log_path.write_text("")

    # -- derived state ------------------------------------------------------

    @property
    def iteration(self) -> int:
        """Formal-evaluation count; the paper-sense iteration number."""
        return sum(1 for o in self.history if o.is_formal)

    @property
    def formal_history(self) -> list[Observation]:
        return [o for o in self.history if o.is_formal]

    @property
    def status(self) -> Status:
        if self.closed:
            return Status.CLOSED
        if self.iteration < self.config.proposal_lockout:
            return Status.SEEDING
        return Status.ACTIVE

    @property
    def pending_seeds(self) -> list[np.ndarray]:
        """Seed points not yet covered by formal evaluations."""
        return [s for s in self.seeds[self.iteration:]]

    def required_point(self) -> np.ndarray | None:
        """The only point bo_led sessions may evaluate right now."""
        if self.iteration < len(self.seeds):
            return self.seeds[self.iteration]
        if self.last_proposal is not None:
            return self.last_proposal.point
        return None

    def model_fingerprints(self) -> list[str]:
        return [m.fingerprint() for m in self.models] if self.models else []

    # -- event log ----------------------------------------------------------

    def _append_record(self, record: dict):
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        self._records.append(line)
        if self._log_path is not None:
            with self._log_path.open("a") as fh:
                fh.write(line + "\n")

    def _append_raw(self, line: str):
        self._records.append(line)

    def records(self) -> list[str]:
        return list(self._records)

    # -- operations ---------------------------------------------------------

    def _check_open(self):
        if self.closed:
            raise SessionClosedError("session is closed")

    def _refit(self):
        formal = self.formal_history
        if len(formal) >= 2:
            self.models = [
                fit(formal, j, restarts=self.config.fit_restarts, seed=0)
                for j in range(self.app.m)
            ]

    def submit_evaluation(self, x, fidelity: Fidelity) -> Observation:
        self._check_open()
        fidelity = Fidelity(fidelity)
        x = self.app.parameter_space.check_point(x)
        if self.config.mode is Mode.BO_LED:
            required = self.required_point()
            if required is None or not np.allclose(x, required, atol=1e-9):
                raise ModeViolationError(
                    "bo_led sessions must evaluate the system's point exactly"
                )
        obs = simulate_evaluation(
            self.simulator, self.app, x, fidelity,
            iteration=len(self.history) + 1,
            timestamp=self.clock(),
        )
        self.history.append(obs)
        if fidelity is Fidelity.FORMAL:
            self._refit()
        self._append_record(
            {
                "v": LOG_SCHEMA_VERSION,
                "type": "evaluation",
                "k": len(self.history),
                "fidelity": fidelity.value,
                "point": [float(v) for v in obs.point],
                "objectives": [float(v) for v in obs.objectives],
                "objectives_raw": [float(v) for v in obs.objectives_raw],
                "iteration": obs.iteration,
                "timestamp": obs.timestamp,
            }
        )
        return obs

    def propose(self, request: str = "") -> tuple[Candidate, AdvisorDecision]:
        self._check_open()
        if self.config.mode is Mode.DESIGNER_LED:
            raise ModeForbidsError("designer_led sessions have no proposal function")
        if self.status is Status.SEEDING or self.iteration < 2:
            raise InsufficientSeedError(
                f"proposals need {max(self.config.proposal_lockout, 2)} formal "
                f"observations, have {self.iteration}"
            )
        rng = np.random.default_rng(
            np.random.SeedSequence(self.config.rng_seed, spawn_key=(2, self.proposal_count))
        )
        batch = generate_batch(
            self.models,
            self.formal_history,
            q=self.config.q,
            ref=self.reference_point,
            rng=rng,
            options=AcquisitionOptions(n_mc=self.config.n_mc),
            generation_iteration=self.iteration,
        )
        bundle, prompt_text = advisor_mod.build_prompt(
            self.app, batch, self.formal_history, request
        )
        if self.config.mode is Mode.BO_LED:
            decision = advisor_mod.select_argmax(batch)
        elif self.config.advisor_policy is AdvisorPolicy.SCRIPTED:
            decision = advisor_mod.select_scripted(
                request, batch, self.app.objective_space.names
            )
        elif self.config.advisor_policy is AdvisorPolicy.LLM:
            if self.config.endpoint is None:
                raise ConfigError("llm advisor policy requires an endpoint config")
            decision = advisor_mod.select_llm(self.config.endpoint, prompt_text, batch)
        else:
            decision = advisor_mod.select_argmax(batch)

        chosen = batch.candidates[decision.index]
        self.current_sliders = chosen.point.copy()
        self.last_proposal = chosen
        entry = RequestLogEntry(request, prompt_text, decision, batch)
        self.request_log.append(entry)
        p = self.proposal_count
        self.proposal_count += 1
        self._append_record(
            {"v": LOG_SCHEMA_VERSION, "type": "prompt", "proposal": p,
             "request": request, "text": prompt_text}
        )
        self._append_record(
            {
                "v": LOG_SCHEMA_VERSION,
                "type": "decision",
                "proposal": p,
                "index": decision.index,
                "reason": decision.reason,
                "policy": decision.policy.value,
                "fallback": decision.fallback,
                "retries": decision.retries,
                "raw_response": decision.raw_response,
            }
        )
        self._append_record(
            {
                "v": LOG_SCHEMA_VERSION,
                "type": "proposal",
                "proposal": p,
                "chosen": decision.index,
                "batch": [
                    {
                        "point": [float(v) for v in c.point],
                        "acquisition_value": float(c.acquisition_value),
                        "means": [float(pr.mean) for pr in c.predictions],
                        "variances": [float(pr.variance) for pr in c.predictions],
                    }
                    for c in batch.candidates
                ],
            }
        )
        return chosen, decision

    def set_sliders(self, x) -> None:
        self._check_open()
        if self.config.mode is Mode.BO_LED:
            raise ModeForbidsError("sliders are disabled in bo_led sessions")
        x = self.app.parameter_space.check_point(x)
        self.current_sliders = x.copy()
        self._append_record(
            {"v": LOG_SCHEMA_VERSION, "type": "sliders",
             "point": [float(v) for v in x]}
        )

    def close(self):
        if not self.closed:
            self.closed = True
            self._append_record({"v": LOG_SCHEMA_VERSION, "type": "closed"})


def _seed_points(config: SessionConfig, n_dims: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(0,)))
    if config.seed_method == "latin_hypercube":
        perms = np.stack([rng.permutation(config.n_seed) for _ in range(n_dims)], axis=1)
        return (perms + rng.uniform(size=(config.n_seed, n_dims))) / config.n_seed
    return rng.uniform(size=(config.n_seed, n_dims))


def create_session(
    config: SessionConfig,
    clock: Callable[[], float] = time.time,
    log_path: str | Path | None = None,
    extra_apps: list[SyntheticApp] | None = None,
) -> SessionState:
    try:
        app = app_by_id(config.app_id, extra_apps)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    seeds = _seed_points(config, app.n)
    state = SessionState(config, app, seeds, clock=clock, log_path=log_path)
    state._append_record(
        {
            "v": LOG_SCHEMA_VERSION,
            "type": "session_created",
            "config": config.to_dict(),
            "seeds": [[float(v) for v in s] for s in seeds],
        }
    )
    return state


def persist(state: SessionState, path: str | Path) -> None:
    records = state.records()
    Path(path).write_text("\n".join(records) + "\n" if records else "")


def load(
    path: str | Path,
    clock: Callable[[], float] = time.time,
    extra_apps: list[SyntheticApp] | None = None,
) -> SessionState:
    """Rebuild a session from its log. Recorded observations are replayed as
    data (not re-simulated), while the simulator's noise stream is advanced
    identically so live use can continue."""
    lines = Path(path).read_text().splitlines()
    state: SessionState | None = None
    n_evals = 0
    pending_decisions: dict[int, dict] = {}
    pending_prompts: dict[int, dict] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SessionLogError(lineno, f"invalid JSON ({exc.msg})")
        rtype = rec.get("type")
        try:
            if rtype == "session_created":
                config = SessionConfig.from_dict(rec["config"])
                app = app_by_id(config.app_id, extra_apps)
                seeds = np.array(rec["seeds"], dtype=float)
                state = SessionState(config, app, seeds, clock=clock)
            elif state is None:
                raise SessionLogError(lineno, "log does not start with session_created")
            elif rtype == "evaluation":
                fidelity = Fidelity(rec["fidelity"])
                halfwidth = state.simulator.noise_halfwidth(fidelity)
                if halfwidth > 0:  # advance the noise stream exactly as live
                    state.simulator._rng.uniform(-halfwidth, halfwidth, size=state.app.m)
                obs = Observation(
                    point=np.array(rec["point"], dtype=float),
                    objectives=np.array(rec["objectives"], dtype=float),
                    fidelity=fidelity,
                    iteration=rec["iteration"],
                    timestamp=rec["timestamp"],
                    objectives_raw=np.array(rec["objectives_raw"], dtype=float),
                )
                state.history.append(obs)
                n_evals += 1
            elif rtype == "prompt":
                pending_prompts[rec["proposal"]] = rec
            elif rtype == "decision":
                pending_decisions[rec["proposal"]] = rec
            elif rtype == "proposal":
                p = rec["proposal"]
                drec = pending_decisions.pop(p)
                prec = pending_prompts.pop(p)
                candidates = tuple(
                    Candidate(
                        point=np.array(c["point"], dtype=float),
                        acquisition_value=c["acquisition_value"],
                        predictions=tuple(
                            PosteriorPrediction(mu, var)
                            for mu, var in zip(c["means"], c["variances"])
                        ),
                    )
                    for c in rec["batch"]
                )
                batch = CandidateBatch(candidates=candidates, generation_iteration=0)
                decision = AdvisorDecision(
                    index=drec["index"],
                    reason=drec["reason"],
                    raw_response=drec["raw_response"],
                    policy=AdvisorPolicy(drec["policy"]),
                    fallback=drec["fallback"],
                    retries=drec["retries"],
                )
                state.request_log.append(
                    RequestLogEntry(prec["request"], prec["text"], decision, batch)
                )
                chosen = batch.candidates[decision.index]
                state.last_proposal = chosen
                state.current_sliders = chosen.point.copy()
                state.proposal_count = p + 1
            elif rtype == "sliders":
                state.current_sliders = np.array(rec["point"], dtype=float)
            elif rtype == "closed":
                state.closed = True
            else:
                raise SessionLogError(lineno, f"unknown record type {rtype!r}")
        except SessionLogError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise SessionLogError(lineno, f"malformed {rtype!r} record: {exc}")
        state._append_raw(line)
    if state is None:
        raise SessionLogError(1, "empty session log")
    state._refit()
    return state
