"""Candidate selection policies: prompt construction, LLM endpoint, scripted rules.

The advisor picks one candidate from a batch to match the designer's request
and explains the pick. The LLM policy talks to a chat-completions endpoint and
demands a JSON reply; the scripted policy is a deterministic rule table used
for offline runs and steering experiments. Both produce the same decision
record, and every decision's index is guaranteed in range for its batch.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import requests

from .acquisition import CandidateBatch
from .domain import Fidelity, Observation
from .testbed import SyntheticApp

MAIN_INSTRUCTION = (
    "Based on the user's request described below, select the index of the "
    "candidate point and provide a reason for your choice."
)


class AdvisorPolicy(str, Enum):
    LLM = "llm"
    SCRIPTED = "scripted"
    ARGMAX_ACQUISITION = "argmax_acquisition"


class AdvisorUnavailableError(RuntimeError):
    """Endpoint unreachable or unparseable after all retries."""

    def __init__(self, message: str, last_failure: Exception | None = None):
        super().__init__(message)
        self.last_failure = last_failure


@dataclass(frozen=True)
class AdvisorEndpointConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = "STEERBO_ADVISOR_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2
    temperature: float | None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class AdvisorDecision:
    index: int
    reason: str
    raw_response: str
    policy: AdvisorPolicy
    fallback: bool = False
    retries: int = 0


@dataclass(frozen=True)
class PromptBundle:
    """Everything the advisor sees, all numeric stats in display units."""

    task_info: str
    candidate_block: tuple[dict, ...]
    history_block: tuple[dict, ...]
    request: str


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def build_prompt(
    app: SyntheticApp,
    batch: CandidateBatch,
    formal_history: list[Observation],
    request: str,
) -> tuple[PromptBundle, str]:
    """Render the selection prompt: main instruction, then task information,
    candidate points, evaluation history, and the designer's request.

    Predictive means are clipped to the objective display ranges; variances
    are rescaled by the squared affine slope. An empty request leaves the
    request section blank. Pure function: same inputs, same text.
    """
    pspace, ospace = app.parameter_space, app.objective_space
    slopes_sq = ospace.display_slopes() ** 2
    obj_lo = np.array([a.display_min for a in ospace.axes])
    obj_hi = np.array([a.display_max for a in ospace.axes])

    lines = [
        "Design parameters:",
    ]
    for a in pspace.axes:
        unit = f" {a.unit}" if a.unit else ""
        lines.append(f"- {a.name}: range [{_fmt(a.display_min)}, {_fmt(a.display_max)}]{unit}")
    lines.append("Objectives (higher is better):")
    for a in ospace.axes:
        unit = f" {a.unit}" if a.unit else ""
        lines.append(f"- {a.name}: range [{_fmt(a.display_min)}, {_fmt(a.display_max)}]{unit}")
    task_info = app.description + "\n" + "\n".join(lines)

    candidates = []
    for i, cand in enumerate(batch.candidates):
        disp_params = pspace.to_display(cand.point)
        means = np.array([p.mean for p in cand.predictions])
        variances = np.array([p.variance for p in cand.predictions])
        disp_means = np.clip(obj_lo + (means + 1.0) / 2.0 * (obj_hi - obj_lo), obj_lo, obj_hi)
        disp_vars = variances * slopes_sq
        candidates.append(
            {
                "index": i,
                "parameters": {a.name: float(v) for a, v in zip(pspace.axes, disp_params)},
                "acquisition_value": float(cand.acquisition_value),
                "predicted_means": {a.name: float(v) for a, v in zip(ospace.axes, disp_means)},
                "predicted_variances": {a.name: float(v) for a, v in zip(ospace.axes, disp_vars)},
            }
        )

    history = []
    for obs in formal_history:
        history.append(
            {
                "parameters": {
                    a.name: float(v)
                    for a, v in zip(pspace.axes, pspace.to_display(obs.point))
                },
                "objectives": {
                    a.name: float(v)
                    for a, v in zip(ospace.axes, ospace.to_display(obs.objectives))
                },
            }
        )

    bundle = PromptBundle(
        task_info=task_info,
        candidate_block=tuple(candidates),
        history_block=tuple(history),
        request=request,
    )

    parts = [MAIN_INSTRUCTION, "", "## Task Information", task_info, "", "## Candidate Points"]
    for c in candidates:
        params = ", ".join(f"{k}={_fmt(v)}" for k, v in c["parameters"].items())
        stats = "; ".join(
            f"{k}: mean {_fmt(c['predicted_means'][k])}, variance {_fmt(c['predicted_variances'][k])}"
            for k in c["predicted_means"]
        )
        parts.append(
            f"[{c['index']}] parameters: {params}\n"
            f"    acquisition value: {_fmt(c['acquisition_value'])}\n"
            f"    predictions: {stats}"
        )
    parts += ["", "## Evaluation History"]
    for i, h in enumerate(history, start=1):
        params = ", ".join(f"{k}={_fmt(v)}" for k, v in h["parameters"].items())
        objs = ", ".join(f"{k}={_fmt(v)}" for k, v in h["objectives"].items())
        parts.append(f"{i}. parameters: {params} -> objectives: {objs}")
    parts += ["", "## Designer's Request", bundle.request, ""]
    parts += [
        'Reply with a JSON object of the form {"index": <integer>, "reason": "<text>"}.'
    ]
    return bundle, "\n".join(parts)


def _argmax_acquisition_decision(batch: CandidateBatch, note: str, policy, raw="",
                                 fallback=False, retries=0) -> AdvisorDecision:
    idx = batch.argmax_acquisition()
    return AdvisorDecision(
        index=idx,
        reason=note,
        raw_response=raw,
        policy=policy,
        fallback=fallback,
        retries=retries,
    )


_OBJECTIVE_RULE = re.compile(r"increase\s+(?:objective\s*)?(\d+)", re.IGNORECASE)


def select_scripted(
    request: str,
    batch: CandidateBatch,
    objective_names: tuple[str, ...] = (),
) -> AdvisorDecision:
    """Deterministic rule table standing in for the LLM in offline runs.

    "increase objective K" (by 1-based number or by objective name) picks the
    candidate with the best predicted mean for that objective; anything else,
    including an empty request, picks the acquisition argmax. Ties go to the
    lowest index.
    """
    target: int | None = None
    matched_name = None
    m = _OBJECTIVE_RULE.search(request or "")
    if m:
        k = int(m.group(1)) - 1
        if 0 <= k < len(batch.candidates[0].predictions):
            target = k
    if target is None and request:
        lowered = request.lower()
        if "increase" in lowered:
            for k, name in enumerate(objective_names):
                if name.lower() in lowered:
                    target = k
                    matched_name = name
                    break
    if target is None:
        note = (
            "No directed request matched; picked the candidate with the "
            "highest acquisition value."
        )
        return _argmax_acquisition_decision(batch, note, AdvisorPolicy.SCRIPTED)
    means = [c.predictions[target].mean for c in batch.candidates]
    idx = int(np.argmax(means))
    label = matched_name or f"objective {target + 1}"
    return AdvisorDecision(
        index=idx,
        reason=(
            f"Request asks to increase {label}; candidate {idx} has the "
            f"highest predicted mean for it."
        ),
        raw_response="",
        policy=AdvisorPolicy.SCRIPTED,
    )


def select_llm(
    config: AdvisorEndpointConfig,
    rendered_prompt: str,
    batch: CandidateBatch,
    session: requests.Session | None = None,
) -> AdvisorDecision:
    """Ask a chat-completions endpoint to pick; validate; retry; fall back.

    Transport or parse failures retry up to max_retries and then raise
    AdvisorUnavailableError. A structurally valid reply whose index is out of
    range falls back (flagged) to the acquisition argmax after the retries.
    """
    q = len(batch.candidates)
    api_key = os.environ.get(config.api_key_env_var, "")
    http = session or requests
    url = config.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": rendered_prompt}],
        "response_format": {"type": "json_object"},
    }
    if config.temperature is not None:
        body["temperature"] = config.temperature
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_failure: Exception | None = None
    out_of_range_raw: str | None = None
    for attempt in range(config.max_retries + 1):
        try:
            resp = http.post(url, json=body, headers=headers, timeout=config.timeout)
            resp.raise_for_status()
            raw = resp.json()["choices"][0]["message"]["content"]
            parsed = json.loads(raw)
            index = int(parsed["index"])
            reason = str(parsed.get("reason", ""))
            if 0 <= index < q:
                return AdvisorDecision(
                    index=index,
                    reason=reason,
                    raw_response=raw,
                    policy=AdvisorPolicy.LLM,
                    retries=attempt,
                )
            out_of_range_raw = raw
            last_failure = ValueError(f"candidate index {index} out of range for q={q}")
        except (requests.RequestException, KeyError, ValueError, TypeError) as exc:
            last_failure = exc
        if attempt < config.max_retries:
            time.sleep(min(0.2 * (attempt + 1), 2.0))
    if out_of_range_raw is not None:
        note = (
            "Advisor kept returning an out-of-range candidate index; fell back "
            "to the candidate with the highest acquisition value."
        )
        return _argmax_acquisition_decision(
            batch, note, AdvisorPolicy.ARGMAX_ACQUISITION,
            raw=out_of_range_raw, fallback=True, retries=config.max_retries,
        )
    raise AdvisorUnavailableError(
        f"advisor endpoint failed after {config.max_retries + 1} attempts: {last_failure}",
        last_failure,
    )


def select_argmax(batch: CandidateBatch) -> AdvisorDecision:
    """System-led pick: the candidate with the highest acquisition value."""
    return _argmax_acquisition_decision(
        batch,
        "Selected the candidate with the highest acquisition value.",
        AdvisorPolicy.ARGMAX_ACQUISITION,
    )
