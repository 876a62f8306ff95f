"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from ..baselines import ALGORITHMS


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ValidateRequest(BaseModel):
    config: Dict[str, Any]


class ValidateResponse(BaseModel):
    valid: bool
    errors: List[str] = Field(default_factory=list)


class RunRequest(BaseModel):
    config: Dict[str, Any]
    algo: Literal[ALGORITHMS]  # type: ignore[valid-type]
    out_dir: str
    seeds: Optional[List[int]] = None


class RunStatus(BaseModel):
    run_id: str
    state: Literal["queued", "running", "done", "failed"]
    algo: str
    config_name: str
    out_dir: str
    summary: Optional[Dict[str, Any]] = None
    error: Optional[str] = None


class OracleRequest(BaseModel):
    benchmark: str
    epsilon: float
    resolution: Optional[int] = None
    lipschitz: Optional[float] = None
    seed_theta: Optional[List[List[float]]] = None
    context: Optional[List[float]] = None


class OracleResponse(BaseModel):
    benchmark: str
    epsilon: float
    lipschitz: float
    points: List[List[float]]
    reachable: List[bool]
    iterations: int
    count: int


class BenchmarkInfo(BaseModel):
    name: str
    theta_dim: int
    context_dim: int
    bounds: List[List[float]]
    n_constraints: int
