from __future__ import annotations

from typing import Any, Dict, List, Optional


class CocycleError(Exception):
    """패키지 공통 예외. exit_code 는 CLI 종료 코드로 그대로 사용된다."""

    exit_code: int = 1

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            **{k: v for k, v in self.context.items() if k != "partial"},
        }


class ConfigError(CocycleError, ValueError):
    """설정 검증 실패. 발견된 모든 오류를 errors 에 모은다."""

    exit_code = 2

    def __init__(self, message: str, errors: Optional[List[str]] = None, **context: Any) -> None:
        super().__init__(message, **context)
        self.errors: List[str] = list(errors or [message])

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["errors"] = self.errors
        return data


class FiberBunchingError(CocycleError):
    exit_code = 3


class NotMixingError(CocycleError):
    """전이행렬이 primitive 가 아님 (mixing_time 상한 안에서 양수화되지 않음)."""

    exit_code = 4


class ConvergenceError(CocycleError):
    exit_code = 5


class SpectralGapError(ConvergenceError):
    """스펙트럴 갭이 하한보다 작음. 부분 결과는 context['partial'] 에 담긴다."""

    @property
    def partial(self) -> Any:
        return self.context.get("partial")


class DiscretizationError(ConvergenceError):
    pass


class DegenerateSubshiftError(CocycleError, ValueError):
    pass


class InadmissibleWordError(CocycleError, ValueError):
    pass


class StableSetError(CocycleError, ValueError):
    """두 점이 같은 stable/unstable 집합에 있지 않음."""


class NearSingularError(CocycleError, ValueError):
    pass


class DimensionError(CocycleError, ValueError):
    pass


class DegenerateEigenfunctionError(CocycleError):
    pass
