from typing import TypedDict, Optional

class EvalRow(TypedDict):
    path: str
    psnr: float
    ssim: float

class SkippedImage(TypedDict):
    path: str
    reason: str

class ExpertRow(TypedDict):
    adec: str
    expert: int
    confidence: float  # W_n
    selections: float  # S_n

class RoutingSummary(TypedDict):
    adec: str
    confidence_cv: float
    selection_cv: float
    experts: list

class GateExport(TypedDict):
    block: str
    path: str
    mean: float
    clean_mean: Optional[float]
    corrupted_mean: Optional[float]
