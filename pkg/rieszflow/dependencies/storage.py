from pathlib import Path

from rieszflow.config import get_settings
from rieszflow.schemas.schemas import ExperimentConfig


def experiment_dir(config: ExperimentConfig) -> Path:
    """Каталог результатів експерименту: output_dir з конфігурації або RIESZFLOW_OUTPUT_DIR/<name>"""
    if config.output_dir:
        path = Path(config.output_dir)
    else:
        path = get_settings().output_path / config.name
    path.mkdir(parents=True, exist_ok=True)
    return path
