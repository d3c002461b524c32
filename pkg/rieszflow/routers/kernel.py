from fastapi import APIRouter, HTTPException, Query

from rieszflow.exceptions import RieszflowError
from rieszflow.models.kernel import KernelSpec
from rieszflow.schemas.schemas import KernelConstantResponse

router = APIRouter(prefix="/kernel", tags=["Kernel"])


@router.get("/constant", response_model=KernelConstantResponse)
def get_constant(d: int = Query(..., ge=1), s: float = Query(..., ge=0.0)):
    """c_{d,s}, вага розширення γ і режим ядра"""
    try:
        spec = KernelSpec.build(d, s)
    except RieszflowError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return KernelConstantResponse(d=spec.d, s=spec.s, c_ds=spec.c_ds, gamma=spec.gamma, is_coulomb=spec.is_coulomb)
