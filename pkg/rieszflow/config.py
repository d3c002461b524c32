import os
from pathlib import Path
from typing import Any, Dict

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from rieszflow import __version__

load_dotenv()


class WorkerSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="RIESZFLOW_", extra="ignore")

    THREADS: int = Field(1, ge=1)


class StorageSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="RIESZFLOW_", extra="ignore")

    OUTPUT_DIR: str = "./results"

    @property
    def output_path(self) -> Path:
        return Path(self.OUTPUT_DIR)


class VersionSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="RIESZFLOW_", extra="ignore")

    CODE_VERSION: str = __version__


class RieszflowSettings(WorkerSettings, StorageSettings, VersionSettings):
    model_config = SettingsConfigDict(
        env_prefix="RIESZFLOW_",
        env_file="./.env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


class LogConfig(BaseSettings):
    LOGGER_NAME: str = "rieszflow"
    LOG_FORMAT: str = "%(levelprefix)s | %(asctime)s | %(name)s | %(message)s"
    LOG_LEVEL: str = os.getenv("RIESZFLOW_LOG_LEVEL", "INFO")

    version: int = 1
    disable_existing_loggers: bool = False
    formatters: Dict[str, Any] = {
        "default": {
            "()": "uvicorn.logging.DefaultFormatter",
            "fmt": LOG_FORMAT,
            "datefmt": "%Y-%m-%d %H:%M:%S",
        },
    }
    handlers: Dict[str, Any] = {
        "default": {
            "formatter": "default",
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
        },
    }
    loggers: Dict[str, Any] = {
        LOGGER_NAME: {"handlers": ["default"], "level": LOG_LEVEL},
    }


def get_settings() -> RieszflowSettings:
    """Свіжі налаштування (змінні оточення читаються при кожному виклику)"""
    return RieszflowSettings()


config = RieszflowSettings()
