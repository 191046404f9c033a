from typing import Literal, Optional

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from PIL import UnidentifiedImageError

from src.backend.models import TrackStartResponse, TrackStateResponse, TrackStepResponse
from src.backend.session_manager import SessionManager
from src.lib.config import TrackerConfig
from src.lib.imageio import read_ppm
from src.ndtensor.errors import CheckpointError, ConfigurationError, UsageError
from src.transt.boxes import BBoxN

app = FastAPI(title="TransT Tracking API", version="0.1.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

session_manager = SessionManager()


def _decode(upload: UploadFile):
    try:
        return read_ppm(upload.file)
    except UnidentifiedImageError:
        raise HTTPException(status_code=400, detail=f"{upload.filename} is not a readable image")


@app.get("/")
async def root():
    """Health check endpoint."""
    return {"status": "ok", "message": "TransT tracking API is running"}


@app.post("/track/start", response_model=TrackStartResponse)
async def start_tracking(
    frame: UploadFile = File(...),
    x: float = Form(...),
    y: float = Form(...),
    w: float = Form(...),
    h: float = Form(...),
    templates: int = Form(2),
    mode: Literal["concat", "avg"] = Form("concat"),
    long_term: bool = Form(False),
    with_mask: bool = Form(False),
    model_path: Optional[str] = Form(None),
):
    """
    Start a tracking session from the first frame and its target box.
    Returns the session ID used by the step endpoint.
    """
    image = _decode(frame)
    box = BBoxN.from_xywh(x, y, w, h)
    if not box.valid:
        raise HTTPException(status_code=400, detail="Initial box must have positive width and height")
    try:
        config = TrackerConfig(templates=templates, mode=mode, long_term=long_term, with_mask=with_mask)
        session = session_manager.create_session(image, box, model_path, config)
    except CheckpointError as exc:
        raise HTTPException(status_code=404, detail=str(exc))
    except (ConfigurationError, UsageError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return TrackStartResponse(
        session_id=session.session_id,
        box=list(box.to_xywh()),
        templates=config.templates,
        mode=config.mode,
    )


@app.post("/track/step/{session_id}", response_model=TrackStepResponse)
async def track_step(session_id: str, frame: UploadFile = File(...)):
    """Track one more frame of the session's sequence."""
    session = session_manager.get_session(session_id)
    if session is None:
        raise HTTPException(status_code=404, detail="Session not found")

    result = session.step(_decode(frame))
    return TrackStepResponse(
        session_id=session_id,
        box=list(result.box.to_xywh()),
        score=result.score,
        iou_pred=result.iou_pred,
        updated_slot=result.updated_slot,
        mask_area=None if result.mask is None else int((result.mask > 0.5).sum()),
    )


@app.get("/track/state/{session_id}", response_model=TrackStateResponse)
async def get_tracking_state(session_id: str):
    """Get the current state of a tracking session."""
    session = session_manager.get_session(session_id)
    if session is None:
        raise HTTPException(status_code=404, detail="Session not found.")
    return TrackStateResponse(session_id=session_id, **session.get_current_state())


@app.delete("/track/{session_id}")
async def delete_tracking(session_id: str):
    """Delete a tracking session."""
    if not session_manager.get_session(session_id):
        raise HTTPException(status_code=404, detail="Session not found")

    session_manager.delete_session(session_id)
    return {"status": "deleted", "session_id": session_id}


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
