# ===================================
# models/common.py
# ===================================
from pydantic import BaseModel
from typing import List, Optional


class CheckResult(BaseModel):
    name: str
    passed: bool
    defect: float
    threshold: float
    message: Optional[str] = None


class CheckReport(BaseModel):
    success: bool
    message: str
    data: List[CheckResult] = []

    @property
    def failures(self) -> List[CheckResult]:
        return [item for item in self.data if not item.passed]
