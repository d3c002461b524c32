import logging

from fastapi import APIRouter, HTTPException

from rieszflow.exceptions import RieszflowError
from rieszflow.models.balls import BallCollection
from rieszflow.schemas.schemas import BallsRequest
from rieszflow.services import balls_service

router = APIRouter(prefix="/balls", tags=["Balls"])
logger = logging.getLogger(__name__)


@router.post("", response_model=BallCollection)
def build_balls(request: BallsRequest):
    """Кулі сумарного радіуса R навколо переданих точок"""
    try:
        return balls_service.grow_and_merge(request.points, request.R, r0=request.r0)
    except (RieszflowError, ValueError) as e:
        logger.warning(f"⚠️ Побудова куль відхилена: {e}")
        raise HTTPException(status_code=422, detail=str(e))
