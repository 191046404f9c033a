import uuid
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.lib.checkpoint import latest_checkpoint, load_checkpoint
from src.lib.config import TrackerConfig, get_profile
from src.tracker.tracker import StepResult, Tracker
from src.transt.boxes import BBoxN
from src.transt.model import TransT


class TrackingSession:
    """One tracked sequence: its own template bank and box over a shared model."""

    def __init__(
        self,
        model: TransT,
        frame: np.ndarray,
        box: BBoxN,
        config: Optional[TrackerConfig] = None,
    ):
        self.session_id = str(uuid.uuid4())
        self.tracker = Tracker(model, config)
        self.tracker.init(frame, box)
        self.frames = 1
        self.last: Optional[StepResult] = None

    def step(self, frame: np.ndarray) -> StepResult:
        """Track one more frame and remember its result."""
        self.last = self.tracker.track(frame)
        self.frames += 1
        return self.last

    def get_current_state(self) -> Dict[str, Any]:
        state = self.tracker.state
        x, y, w, h = state.prev_box.to_xywh()
        return {
            "box": [x, y, w, h],
            "score": None if self.last is None else self.last.score,
            "iou_pred": None if self.last is None else self.last.iou_pred,
            "frames": self.frames,
            "template_updates": state.bank.updates,
        }


class SessionManager:
    """Manages tracking sessions; models are loaded once per checkpoint and shared."""

    def __init__(self, profile: str = "toy", checkpoint_root: str | Path = "checkpoints"):
        self.profile = profile
        self.checkpoint_root = checkpoint_root
        self.sessions: Dict[str, TrackingSession] = {}
        self.models: Dict[str, TransT] = {}

    def get_model(self, model_path: Optional[str] = None) -> TransT:
        """Load (or reuse) the model of `model_path`, or of the newest checkpoint of the profile."""
        if model_path is None:
            model_path = str(latest_checkpoint(self.profile, self.checkpoint_root))
        if model_path not in self.models:
            model = TransT(get_profile(self.profile).model)
            load_checkpoint(model, model_path)
            self.models[model_path] = model
        return self.models[model_path]

    def create_session(
        self,
        frame: np.ndarray,
        box: BBoxN,
        model_path: Optional[str] = None,
        config: Optional[TrackerConfig] = None,
    ) -> TrackingSession:
        session = TrackingSession(self.get_model(model_path), frame, box, config)
        self.sessions[session.session_id] = session
        return session

    def get_session(self, session_id: str) -> Optional[TrackingSession]:
        return self.sessions.get(session_id)

    def delete_session(self, session_id: str):
        self.sessions.pop(session_id, None)
