from fastapi import APIRouter

from rieszflow.schemas.schemas import SuiteConfig, SuiteResponse
from rieszflow.services.suite_service import run_identity_suite

router = APIRouter(prefix="/suite", tags=["Suite"])


@router.post("", response_model=SuiteResponse)
def run_suite(config: SuiteConfig = SuiteConfig()):
    # Провали є даними, тому відповідь завжди 200
    table = run_identity_suite(config)
    return SuiteResponse(passed=table.passed, rows=table.rows)
