#!/usr/bin/env python3
"""
FastAPI server exposing the closed-form analysis and the CEP walkthrough
"""
import logging
import os
from typing import List, Literal, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, ValidationError

from app import harness
from app.errors import DrisError
from app.scenario import (
    PILOTS_DIRECT,
    PILOTS_NONRECIPROCAL,
    PILOTS_RECIPROCAL,
    AdversaryTiming,
    ScenarioConfig,
    efficiency,
    eta_s,
    load_scenario,
)
from app.scenarios import list_scenarios, load_scenario_file, load_scenario_text

load_dotenv()

# Setup logging
logging.basicConfig(
    level=os.getenv('DRIS_LOG_LEVEL', 'INFO').upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

app = FastAPI(title="D-RIS Link Simulator API")


@app.middleware("http")
async def log_requests(request: Request, call_next):
    logger.info(f"Incoming request: {request.method} {request.url.path}")
    response = await call_next(request)
    if response.status_code == 404:
        logger.warning(f"404 Not Found: {request.method} {request.url.path}")
    return response


app.add_middleware(
    CORSMiddleware,
    allow_origins=os.getenv('DRIS_CORS_ORIGINS', 'http://localhost:3000,http://127.0.0.1:3000').split(','),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Configuration
API_HOST = os.getenv('DRIS_API_HOST', '0.0.0.0')
API_PORT = int(os.getenv('DRIS_API_PORT', 8000))
MAX_SWEEP_VALUES = 200


class ScenarioSource(BaseModel):
    scenario: str = Field(default="reference", min_length=1, description="bundled scenario name")
    config_text: Optional[str] = Field(default=None, max_length=20000, description="inline scenario text")


class AnalyzeRequest(ScenarioSource):
    sweep: Literal["tx_power_dbm", "noise_dbm", "m_a", "m_e", "eta_s", "n_n_prime"]
    values: List[float] = Field(default_factory=list, max_length=MAX_SWEEP_VALUES)


class EtaSRequest(BaseModel):
    n_total: int = Field(default=22, ge=1)
    n_r: int = Field(default=11, ge=0)
    n_n: Optional[int] = Field(default=None, ge=0)
    n_n_prime: Optional[int] = Field(default=None, ge=0)


class CepDemoRequest(ScenarioSource):
    scenario: str = Field(default="cep_demo", min_length=1)
    cep_scenario: Literal["opt1", "opt2", "polluted"] = "opt1"
    trial: int = Field(default=0, ge=0)
    noiseless: bool = True


def resolve_config(source: ScenarioSource) -> ScenarioConfig:
    """Inline text wins over the bundled name"""
    if source.config_text is not None:
        return load_scenario(source.config_text)
    if source.scenario not in list_scenarios():
        raise HTTPException(status_code=404, detail=f"Scenario {source.scenario!r} not found")
    return load_scenario_file(source.scenario)


@app.get("/")
async def root():
    return {
        "message": "D-RIS link simulator API is running",
        "endpoints": ["/health", "/api/scenarios", "/api/analyze", "/api/eta-s", "/api/cep-demo"],
    }


@app.get("/health")
async def health():
    """Health check with the bundled scenario library status"""
    status = {"status": "healthy"}
    try:
        names = list_scenarios()
        load_scenario_file(names[0])
        status["scenarios"] = f"ok ({len(names)} bundled)"
    except Exception as e:
        status["scenarios"] = f"error: {str(e)}"
        status["status"] = "degraded"
    return status


@app.get("/api/scenarios")
def scenarios():
    items = []
    for name in list_scenarios():
        try:
            cfg = load_scenario_file(name)
        except DrisError as e:
            logger.error(f"Bundled scenario {name} is invalid: {e}")
            continue
        items.append({
            "name": name,
            "m_a": cfg.m_a,
            "m_e": cfg.m_e,
            "n_total": cfg.slot.n_total,
            "mode": cfg.adversary.mode,
            "link_mode": cfg.link_mode,
            "text": load_scenario_text(name),
        })
    return {"scenarios": items, "total": len(items)}


@app.post("/api/analyze")
def analyze(request: AnalyzeRequest):
    try:
        cfg = resolve_config(request)
        rows = harness.run_sweep(cfg, request.sweep, request.values, simulate=False)
        return {
            "axis": request.sweep,
            "seed": cfg.seed,
            "config_sha256": harness.config_hash(cfg),
            "rows": [row.as_dict() for row in rows],
        }
    except HTTPException:
        raise
    except DrisError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception(f"Analyze failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/api/eta-s")
def eta_s_endpoint(request: EtaSRequest):
    try:
        given = request.model_dump(exclude={"n_total"}, exclude_none=True)
        timing = AdversaryTiming(**given)
        n = request.n_total
        return {
            "n_total": n,
            "n_r": timing.n_r,
            "n_n": timing.n_n,
            "n_n_prime": timing.n_n_prime,
            "eta_s": {regime: eta_s(timing, n, regime)
                      for regime in ("reciprocal", "nonreciprocal_eavesdrop", "nonreciprocal_inject")},
            "efficiency": {
                "nonreciprocal": float(efficiency(PILOTS_NONRECIPROCAL, n)),
                "reciprocal": float(efficiency(PILOTS_RECIPROCAL, n)),
                "direct": float(efficiency(PILOTS_DIRECT, n)),
            },
        }
    except (DrisError, ValidationError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception(f"eta_s failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/api/cep-demo")
def cep_demo(request: CepDemoRequest):
    try:
        cfg = resolve_config(request)
        trace = harness.trace_cep(cfg, request.cep_scenario, request.trial, noiseless=request.noiseless)
        return {
            "scenario": request.cep_scenario,
            "ue_tag": trace.ue.scenario_tag,
            "bs_tag": trace.bs.scenario_tag,
            "trusted": trace.ue.trusted and trace.bs.trusted,
            "errors": trace.errors(),
            "records": trace.records(),
        }
    except HTTPException:
        raise
    except DrisError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception(f"CEP demo failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=API_HOST, port=API_PORT)
