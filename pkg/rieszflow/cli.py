import logging
import sys
from logging.config import dictConfig
from pathlib import Path
from typing import Optional

import click

from rieszflow import __version__
from rieszflow.config import LogConfig
from rieszflow.dependencies.storage import experiment_dir
from rieszflow.exceptions import RieszflowError
from rieszflow.exceptions.serialization import dump_json, read_points, write_json, write_rows_csv
from rieszflow.schemas.schemas import ExperimentConfig, SuiteConfig
from rieszflow.services import balls_service
from rieszflow.services.harness_service import run_convergence, run_stability
from rieszflow.services.suite_service import run_identity_suite

logger = logging.getLogger("rieszflow")


@click.group()
@click.version_option(__version__, prog_name="rieszflow")
def cli():
    """Потоки частинок з ядрами Ріса і їхня модульована енергія"""
    dictConfig(LogConfig().model_dump())


@cli.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--stability/--no-stability", default=False, help="Also run the weak-strong stability experiment.")
def run(config_file: Path, stability: bool):
    """Експеримент збіжності з YAML-конфігурації"""
    try:
        config = ExperimentConfig.from_yaml(config_file)
        result = run_convergence(config)
        if stability:
            report = run_stability(config)
            write_json(report, experiment_dir(config) / "stability.json")
    except (RieszflowError, ValueError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        sys.exit(1)
    click.echo(f"rate={result.rate}")


@cli.command()
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--output", type=click.Path(dir_okay=False, path_type=Path), default=None, help="CSV table path.")
def suite(config_file: Optional[Path], output: Optional[Path]):
    """Набір тотожностей; код виходу 0 лише без провалів"""
    try:
        config = SuiteConfig.from_yaml(config_file)
    except (RieszflowError, ValueError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        sys.exit(1)
    table = run_identity_suite(config)
    for row in table.rows:
        mark = "PASS" if row.passed else "FAIL"
        click.echo(f"{mark}  {row.name}: {row.measured!r} (threshold {row.threshold!r})")
    if output is not None:
        write_rows_csv(
            output,
            ["name", "measured", "threshold", "passed", "detail"],
            (row.model_dump() for row in table.rows),
        )
    sys.exit(0 if table.passed else 1)


@cli.command()
@click.option("--points", "points_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--R", "radius", type=float, required=True, help="Total radius of the collection.")
@click.option("--r0", type=float, default=None, help="Initial radius (default min(eta_N/4, R/(2N))).")
def balls(points_file: Path, radius: float, r0: Optional[float]):
    """Кулі сумарного радіуса R навколо точок з файлу"""
    try:
        collection = balls_service.grow_and_merge(read_points(points_file), radius, r0=r0)
    except (RieszflowError, ValueError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        sys.exit(1)
    click.echo(dump_json(collection))


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host: str, port: int):
    """Запускає API лабораторії"""
    import uvicorn

    uvicorn.run("rieszflow.main:app", host=host, port=port, log_config=LogConfig().model_dump())
