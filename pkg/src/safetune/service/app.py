"""FastAPI service wrapping the experiment runner.

Sweeps are minutes-long, so runs are submitted as jobs: POST /runs returns
a run id immediately (or the final status with ?wait=true) and GET
/runs/{id} reports progress. Everything the CLI does goes through these
endpoints.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ExperimentConfig, validation_errors
from ..envs import BENCHMARKS
from ..errors import SafetuneError
from ..presets import PRESETS
from ..runner import oracle_reachable_set, run_experiment
from .schemas import (
    BenchmarkInfo,
    HealthResponse,
    OracleRequest,
    OracleResponse,
    RunRequest,
    RunStatus,
    ValidateRequest,
    ValidateResponse,
)


class JobRegistry:
    """In-memory run registry; one worker thread per submitted run."""

    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, RunStatus] = {}
        self._threads: dict[str, threading.Thread] = {}

    def submit(self, cfg: ExperimentConfig, request: RunRequest) -> RunStatus:
        run_id = uuid.uuid4().hex[:12]
        status = RunStatus(
            run_id=run_id, state="queued", algo=request.algo,
            config_name=cfg.name, out_dir=request.out_dir,
        )
        with self._lock:
            self._jobs[run_id] = status

        def work():
            self._update(run_id, state="running")
            try:
                summary = run_experiment(cfg, request.algo, request.out_dir,
                                         seeds=request.seeds)
                self._update(run_id, state="done", summary=summary)
            except SafetuneError as err:
                self._update(run_id, state="failed", error=str(err))
            except Exception as err:  # surface unexpected faults too
                self._update(run_id, state="failed", error=f"{type(err).__name__}: {err}")

        thread = threading.Thread(target=work, name=f"run-{run_id}", daemon=True)
        with self._lock:
            self._threads[run_id] = thread
        thread.start()
        return status

    def _update(self, run_id: str, **changes):
        with self._lock:
            self._jobs[run_id] = self._jobs[run_id].model_copy(update=changes)

    def get(self, run_id: str) -> RunStatus:
        with self._lock:
            if run_id not in self._jobs:
                raise KeyError(run_id)
            return self._jobs[run_id]

    def wait(self, run_id: str, timeout=None) -> RunStatus:
        thread = self._threads.get(run_id)
        if thread is not None:
            thread.join(timeout)
        return self.get(run_id)

    def all(self) -> list[RunStatus]:
        with self._lock:
            return list(self._jobs.values())


def create_app() -> FastAPI:
    app = FastAPI(title="safetune", version=__version__)
    jobs = JobRegistry()
    app.state.jobs = jobs

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(version=__version__)

    @app.get("/benchmarks", response_model=list[BenchmarkInfo])
    def benchmarks():
        return [
            BenchmarkInfo(
                name=b.name, theta_dim=b.theta_dim, context_dim=b.context_dim,
                bounds=[list(bb) for bb in b.bounds], n_constraints=b.n_constraints,
            )
            for b in BENCHMARKS.values()
        ]

    @app.get("/presets")
    def preset_names():
        return sorted(PRESETS)

    @app.get("/presets/{name}")
    def preset(name: str):
        if name not in PRESETS:
            raise HTTPException(status_code=404, detail=f"unknown preset {name!r}")
        return PRESETS[name]().model_dump(mode="json")

    @app.post("/config/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest):
        errors = validation_errors(request.config)
        return ValidateResponse(valid=not errors, errors=errors)

    @app.post("/runs", response_model=RunStatus)
    def submit_run(request: RunRequest, wait: bool = False):
        errors = validation_errors(request.config)
        if errors:
            raise HTTPException(status_code=422, detail=errors)
        cfg = ExperimentConfig(**request.config)
        status = jobs.submit(cfg, request)
        if wait:
            return jobs.wait(status.run_id)
        return status

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs():
        return jobs.all()

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str, wait: bool = False):
        try:
            return jobs.wait(run_id) if wait else jobs.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")

    @app.get("/runs/{run_id}/metrics")
    def run_metrics(run_id: str, kind: str = "aggregate", seed: int = 0):
        try:
            status = jobs.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        base = Path(status.out_dir)
        name = (
            f"{status.algo}_aggregate.csv" if kind == "aggregate"
            else f"{status.algo}_seed{seed}.csv"
        )
        path = base / name
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no metrics file {name} yet")
        return {"filename": name, "csv": path.read_text()}

    @app.post("/oracle/reachable-set", response_model=OracleResponse)
    def oracle(request: OracleRequest):
        try:
            result = oracle_reachable_set(
                request.benchmark, request.epsilon,
                resolution=request.resolution, lipschitz=request.lipschitz,
                seed_theta=request.seed_theta, context=request.context,
            )
        except SafetuneError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return OracleResponse(**result)

    return app

app = create_app()
