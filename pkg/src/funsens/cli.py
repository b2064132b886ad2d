"""Command-line driver.

Each command posts the config to the HTTP service and writes the returned
files under --out.  By default the service runs in-process (no socket); pass
--server to talk to a remote instance started with ``funsens serve``.

Exit codes: 0 success, 2 config error, 3 data-contract error, 4 numerical
failure.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx

from . import __version__
from .errors import ConfigError
from .runconfig import RunConfig, load_config

EXIT_CODES = {"config": 2, "data_contract": 3, "numerical": 4}


def _post(command: str, payload: dict, server: str | None) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server.rstrip("/"), timeout=3600.0) as client:
            return client.post(f"/v1/{command}", json=payload)

    from .service import create_app

    async def _in_process() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://funsens.local", timeout=None
        ) as client:
            return await client.post(f"/v1/{command}", json=payload)

    return asyncio.run(_in_process())


def _fail(kind: str, detail: str) -> None:
    click.echo(f"error ({kind}): {detail}", err=True)
    sys.exit(EXIT_CODES.get(kind, 1))


def _run(command: str, config_path: str, out_dir: str, seed: int | None, server: str | None) -> None:
    try:
        config = load_config(config_path)
        if seed is not None:
            config = config.model_copy(update={"seed": seed})
    except ConfigError as exc:
        _fail("config", str(exc))
    try:
        resp = _post(command, config.model_dump(mode="json"), server)
    except httpx.HTTPError as exc:
        _fail("data_contract", f"cannot reach server: {exc}")
    if resp.status_code != 200:
        try:
            body = resp.json()
        except ValueError:
            body = {"kind": "numerical", "detail": resp.text}
        _fail(body.get("kind", "numerical"), body.get("detail", resp.text))
    payload = resp.json()

    from .pipeline import write_payload

    written = write_payload(payload, out_dir)
    for path in written:
        click.echo(path)
    summary = payload.get("summary") or {}
    if summary:
        click.echo(json.dumps(summary, sort_keys=True))


def _common(f):
    f = click.option("--server", default=None, help="Remote service URL (default: in-process).")(f)
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                     help="Override the config seed.")(f)
    f = click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
                     help="Directory for output files.")(f)
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(exists=True, dir_okay=False), help="Run config JSON.")(f)
    return f


@click.group()
@click.version_option(version=__version__, prog_name="funsens")
def main() -> None:
    """Sensitivity analysis for models with scalar and functional inputs."""


@main.command()
@_common
def sample(config_path, out_dir, seed, server):
    """Write the design matrices and manifest for external evaluation."""
    _run("sample", config_path, out_dir, seed, server)


@main.command()
@_common
def estimate(config_path, out_dir, seed, server):
    """Estimate sensitivity indices (in-process model or evaluations CSV)."""
    _run("estimate", config_path, out_dir, seed, server)


@main.command(name="fit-joint")
@_common
def fit_joint_cmd(config_path, out_dir, seed, server):
    """Fit the joint mean-dispersion metamodel and report its indices."""
    _run("fit-joint", config_path, out_dir, seed, server)


@main.command()
@_common
def replicate(config_path, out_dir, seed, server):
    """Distribution of index estimates over fresh learning samples."""
    _run("replicate", config_path, out_dir, seed, server)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8711, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
