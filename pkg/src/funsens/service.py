"""HTTP front end: each pipeline command is one POST endpoint.

The service never touches the filesystem; responses carry the manifest and
the generated file contents, and the caller decides where to put them.
Error mapping: config problems are 422, data-contract violations 409,
numerical failures 500 — all with a ``{"kind", "detail"}`` body the CLI
translates into exit codes.
"""

from __future__ import annotations

from typing import Dict, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .errors import ConfigError, DataContractError, NumericalError
from .pipeline import RUNNERS
from .runconfig import RunConfig


class RunResult(BaseModel):
    manifest: Optional[dict] = None
    files: Dict[str, str]
    summary: dict


def create_app() -> FastAPI:
    app = FastAPI(title="funsens", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=422, content={"kind": "config", "detail": str(exc)})

    @app.exception_handler(DataContractError)
    async def _contract_error(request: Request, exc: DataContractError):
        return JSONResponse(status_code=409, content={"kind": "data_contract", "detail": str(exc)})

    @app.exception_handler(NumericalError)
    async def _numerical_error(request: Request, exc: NumericalError):
        return JSONResponse(status_code=500, content={"kind": "numerical", "detail": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        detail = "; ".join(
            ".".join(str(p) for p in err["loc"]) + ": " + err["msg"] for err in exc.errors()
        )
        return JSONResponse(status_code=422, content={"kind": "config", "detail": detail})

    @app.get("/v1/health")
    async def health():
        return {"status": "ok", "version": __version__}

    def _register(command: str, runner):
        @app.post(f"/v1/{command}", response_model=RunResult, name=command)
        async def endpoint(config: RunConfig) -> RunResult:
            payload = runner(config)
            return RunResult(**payload)

    for command, runner in RUNNERS.items():
        _register(command, runner)

    return app


app = create_app()
