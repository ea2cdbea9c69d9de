"""Command-line client.

``run`` executes an experiment through the service API: by default the app is
mounted in-process (no network, artifacts land on the local filesystem), or
point ``--server`` at a running instance.  ``serve`` starts that instance.

Set DDCONSENSUS_LOG to DEBUG/INFO/WARNING to control log verbosity.
"""
from __future__ import annotations

import json
import logging
import os
import sys

import click

from .errors import ConfigError
from .experiment import EXIT_CONFIG_ERROR

log = logging.getLogger(__name__)


def _setup_logging() -> None:
    level = os.environ.get("DDCONSENSUS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


@click.group()
def main() -> None:
    """Data-driven leader-follower consensus toolkit."""
    _setup_logging()


@main.command()
@click.argument("config", required=False, type=click.Path())
@click.option("--fixture", type=click.Choice(["sec6"]), default=None,
              help="Run a built-in benchmark instead of (or as a base for) a config file.")
@click.option("--mode", type=click.Choice(["noiseless", "noisy", "leader-only"]),
              default=None, help="Override the configured mode.")
@click.option("--seed", type=int, default=None, help="Override the data seed.")
@click.option("--out", type=click.Path(), default=None, help="Override the output directory.")
@click.option("--server", default=None,
              help="Base URL of a running service; defaults to an in-process app.")
def run(config, fixture, mode, seed, out, server):
    """Run the collect -> synthesize -> certify -> simulate pipeline."""
    try:
        payload = _build_payload(config, fixture, mode, seed, out)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)

    response = _post_experiment(payload, server)
    if response.status_code == 422:
        click.echo(f"config error: {_detail(response)}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if response.status_code != 200:
        click.echo(f"service error {response.status_code}: {_detail(response)}", err=True)
        sys.exit(1)

    report = response.json()
    _print_summary(report)
    sys.exit(int(report["exit_code"]))


def _build_payload(config, fixture, mode, seed, out) -> dict:
    import yaml

    raw: dict = {}
    if config is not None:
        try:
            with open(config) as fh:
                raw = yaml.safe_load(fh) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
    if fixture is not None:
        raw["fixture"] = fixture
    if mode is not None:
        raw["mode"] = mode
    raw.setdefault("mode", "noiseless")
    if seed is not None:
        raw.setdefault("data", {})
        raw["data"]["seed"] = seed
    if out is not None:
        raw["out_dir"] = str(out)
    if config is None and fixture is None:
        raise ConfigError("either a config file or --fixture is required")
    if "data" not in raw or raw["data"].get("seed") is None:
        raise ConfigError("a seed is mandatory (data.seed or --seed)")
    return raw


def _post_experiment(payload: dict, server: str | None):
    import httpx

    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post("/experiments/run", json=payload)

    import asyncio

    from .service import create_app

    async def _post():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://ddconsensus",
                                     timeout=600.0) as client:
            return await client.post("/experiments/run", json=payload)

    return asyncio.run(_post())


def _detail(response) -> str:
    try:
        return json.dumps(response.json().get("detail"))
    except Exception:
        return response.text[:500]


def _print_summary(report: dict) -> None:
    click.echo(f"mode: {report['mode']}")
    click.echo(f"certified: {report['certified']}")
    if report.get("final_error") is not None:
        click.echo(f"consensus: {'ok' if report['consensus_ok'] else 'NOT reached'} "
                   f"(final error {report['final_error']:.3e}, "
                   f"first below tol at t={report['first_below_tol']})")
    region = report.get("region")
    if region and region.get("bound") is not None:
        click.echo(f"region bound: {region['bound']:.6f} (verified: {region['verified']})")
    spectrum = report.get("spectrum")
    if spectrum:
        click.echo(f"alpha: {spectrum['alpha']:.6f}  nu: {spectrum['nu']:.6f}")
    leader = report.get("leader")
    if leader:
        click.echo(f"theta: {leader['theta']:.6f}  circle ratio: {leader['ratio']:.6f} "
                   f"< {leader['threshold']:.6f}  c0: {leader['c0']:.6f}")
    for note in report.get("diagnostics", []):
        click.echo(f"note: {note}")
    click.echo(f"artifacts: {report.get('out_dir', '')} "
               f"({len(report.get('manifest', []))} files)")
    click.echo(f"exit code: {report['exit_code']}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the synthesis service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
