from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing import List, Optional
from config import TOOL_VERSION, QNG_THREADS, setup_logging
from errors import QngError, UsageError
from fock_core import ClickProbabilities, apply_loss, click_probabilities, g2, mean_photon_number
from sources import SourceConfig, SpdcConfig, heralded_state
from witnesses import (
    DepthMethod,
    Feature,
    attenuation_trajectory,
    classify,
    depth_bisection,
    qng_depth_closed_form,
    transmittance,
    with_fiber_range,
)
from depth_optimizer import SweepSpec, compare_cw_pulsed, refine, sweep
from manifest import json_safe
from run_store import RunStore
import logging

setup_logging()
logger = logging.getLogger(__name__)


class ModelRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: SourceConfig
    attenuator_db: float = Field(default=0.0, ge=0.0)


class DepthRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Optional[SourceConfig] = None
    attenuator_db: float = Field(default=0.0, ge=0.0)
    p1: Optional[float] = None
    p2plus: Optional[float] = None
    feature: Feature = Feature.QNG
    method: Optional[DepthMethod] = None
    fiber_loss_db_per_km: Optional[float] = None

    @model_validator(mode="after")
    def _check_input(self):
        if self.source is None and (self.p1 is None or self.p2plus is None):
            raise ValueError("give a source or both p1 and p2plus")
        return self


class TrajectoryRequest(ModelRequest):
    atten_db: List[float] = Field(min_length=1)


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cw: SpdcConfig
    pulsed: SpdcConfig


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    spec: SweepSpec
    refine: bool = False


def _state(source, attenuator_db):
    return apply_loss(heralded_state(source), transmittance(attenuator_db))


app = FastAPI(title="QNG Depth Toolkit", version=TOOL_VERSION)
run_store = RunStore()


@app.exception_handler(QngError)
async def qng_error_handler(request: Request, exc: QngError):
    logger.warning(f"❌ {request.url.path}: {exc}")
    return JSONResponse(status_code=422, content=exc.to_dict())


@app.exception_handler(ValidationError)
async def validation_error_handler(request: Request, exc: ValidationError):
    return JSONResponse(
        status_code=422,
        content={"error": "ValidationError", "module": "service", "message": str(exc)},
    )


@app.get("/status")
async def get_status():
    """Service health plus the most recently recorded CLI runs."""
    return {
        "status": "ok",
        "version": TOOL_VERSION,
        "workers": QNG_THREADS,
        "recent_runs": run_store.recent(10),
    }


@app.post("/api/model")
def model_report(req: ModelRequest):
    state = _state(req.source, req.attenuator_db)
    verdict = classify(state)
    return json_safe({
        **click_probabilities(state).model_dump(include={"p0", "p1", "p2plus"}),
        "mean_photon_number": mean_photon_number(state),
        "g2": g2(state),
        "verdict": verdict.model_dump(mode="json"),
    })


@app.post("/api/depth")
def depth_report(req: DepthRequest):
    if req.method == DepthMethod.CLOSED_FORM and req.feature != Feature.QNG:
        raise UsageError("the closed form only exists for the QNG depth", "service")
    if req.source is not None:
        state = _state(req.source, req.attenuator_db)
        if (req.method or DepthMethod.BISECTION) == DepthMethod.BISECTION:
            report = depth_bisection(state, req.feature)
        else:
            report = qng_depth_closed_form(click_probabilities(state))
    else:
        if req.method == DepthMethod.BISECTION:
            raise UsageError("bisection needs a photon-number state; pass a source", "service")
        report = qng_depth_closed_form(ClickProbabilities.from_values(req.p1, req.p2plus))
    if req.fiber_loss_db_per_km is not None:
        report = with_fiber_range(report, req.fiber_loss_db_per_km)
    logger.info(f"📏 Depth request: {report.describe()}")
    return json_safe({**report.model_dump(mode="python"), "summary": report.describe()})


@app.post("/api/trajectory")
def trajectory(req: TrajectoryRequest):
    points = attenuation_trajectory(_state(req.source, req.attenuator_db), req.atten_db)
    return json_safe([pt.model_dump() for pt in points])


@app.post("/api/compare")
def compare(req: CompareRequest):
    return json_safe(compare_cw_pulsed(req.cw, req.pulsed).model_dump())


@app.post("/api/sweep")
def depth_sweep(req: SweepRequest):
    result = sweep(req.spec)
    if req.refine:
        result = refine(result, req.spec)
    return json_safe(result.model_dump())
