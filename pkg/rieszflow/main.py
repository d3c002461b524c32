import logging
from contextlib import asynccontextmanager
from logging.config import dictConfig

from fastapi import FastAPI

from rieszflow import __version__
from rieszflow.config import LogConfig, get_settings
from rieszflow.routers import balls, kernel, suite

dictConfig(LogConfig().model_dump())
logger = logging.getLogger("rieszflow")


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Налаштування лабораторії на час життя API"""

    try:
        settings = get_settings()
        settings.output_path.mkdir(parents=True, exist_ok=True)
        logger.info(f"✅ Каталог результатів: {settings.output_path}, виконавців: {settings.THREADS}")

        yield

    except Exception as e:
        logger.error(f"❌ Помилка при запуску сервера: {e}")
        raise e

    finally:
        logger.info("🔴 Лабораторію зупинено")


app = FastAPI(
    lifespan=lifespan,
    title="Rieszflow API",
    description="Лабораторія потоків частинок з ядрами Ріса та модульованої енергії",
    version=__version__,
)


@app.get("/", include_in_schema=False)
def root():
    """Кореневий маршрут для health check та перевірки доступності API."""
    return {
        "message": "Rieszflow API is running",
        "docs": "/docs",
        "version": __version__,
    }


app.include_router(kernel.router, prefix="/api/v1")
app.include_router(balls.router, prefix="/api/v1")
app.include_router(suite.router, prefix="/api/v1")
