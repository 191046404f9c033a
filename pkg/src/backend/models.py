from typing import List, Literal, Optional

from pydantic import BaseModel


class TrackStartResponse(BaseModel):
    """Response after initializing a tracking session."""

    session_id: str
    box: List[float]  # x, y, w, h in pixels
    templates: int
    mode: Literal["concat", "avg"]


class TrackStepResponse(BaseModel):
    """Result of tracking one uploaded frame."""

    session_id: str
    box: List[float]
    score: float
    iou_pred: float
    updated_slot: int  # -1 if the template bank was not refreshed
    mask_area: Optional[int] = None  # foreground pixels, when masks are requested


class TrackStateResponse(BaseModel):
    """Current state of a tracking session."""

    session_id: str
    box: List[float]
    score: Optional[float] = None
    iou_pred: Optional[float] = None
    frames: int
    template_updates: int
