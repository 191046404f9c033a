import io
from unittest.mock import Mock, patch

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from src.backend.main import app
from src.ndtensor.errors import CheckpointError
from src.tracker.tracker import StepResult
from src.transt.boxes import BBoxN

client = TestClient(app)

START_FORM = {"x": "10", "y": "12", "w": "20", "h": "16"}


def ppm_bytes(size: int = 32) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.full((size, size, 3), 128, dtype=np.uint8)).save(buffer, format="PPM")
    return buffer.getvalue()


def create_mock_session(session_id: str = "abc") -> Mock:
    session = Mock()
    session.session_id = session_id
    session.step.return_value = StepResult(BBoxN.from_xywh(11.0, 13.0, 20.0, 16.0), 0.9, 0.7, 4, updated_slot=1)
    session.get_current_state.return_value = {
        "box": [11.0, 13.0, 20.0, 16.0],
        "score": 0.9,
        "iou_pred": 0.7,
        "frames": 2,
        "template_updates": 1,
    }
    return session


@pytest.fixture
def mock_manager():
    with patch("src.backend.main.session_manager") as manager:
        yield manager


class TestHealth:
    """Test suite for the health endpoint."""

    def test_root(self):
        """Test the API reports it is running."""
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"


class TestStartTracking:
    """Test suite for POST /track/start."""

    def test_start(self, mock_manager):
        """Test a decoded frame and box create a session."""
        mock_manager.create_session.return_value = create_mock_session()
        response = client.post(
            "/track/start",
            data={**START_FORM, "templates": "1"},
            files={"frame": ("f.ppm", ppm_bytes(), "image/x-portable-pixmap")},
        )
        assert response.status_code == 200
        body = response.json()
        assert body == {"session_id": "abc", "box": [10.0, 12.0, 20.0, 16.0], "templates": 1, "mode": "concat"}

        frame, box, model_path, config = mock_manager.create_session.call_args.args
        assert frame.shape == (3, 32, 32)
        assert box == BBoxN.from_xywh(10.0, 12.0, 20.0, 16.0)
        assert model_path is None and config.templates == 1

    def test_invalid_box(self, mock_manager):
        """Test a zero-width box is a 400."""
        response = client.post(
            "/track/start",
            data={**START_FORM, "w": "0"},
            files={"frame": ("f.ppm", ppm_bytes(), "image/x-portable-pixmap")},
        )
        assert response.status_code == 400
        mock_manager.create_session.assert_not_called()

    def test_unreadable_frame(self, mock_manager):
        """Test bytes that are not an image are a 400."""
        response = client.post(
            "/track/start",
            data=START_FORM,
            files={"frame": ("f.ppm", b"not an image", "application/octet-stream")},
        )
        assert response.status_code == 400

    def test_no_checkpoint(self, mock_manager):
        """Test a missing model checkpoint is a 404."""
        mock_manager.create_session.side_effect = CheckpointError("no checkpoint matches checkpoints/toy/toy*.ttk")
        response = client.post(
            "/track/start",
            data=START_FORM,
            files={"frame": ("f.ppm", ppm_bytes(), "image/x-portable-pixmap")},
        )
        assert response.status_code == 404

    def test_bad_template_count(self, mock_manager):
        """Test an invalid tracker setting is a 400."""
        response = client.post(
            "/track/start",
            data={**START_FORM, "templates": "0"},
            files={"frame": ("f.ppm", ppm_bytes(), "image/x-portable-pixmap")},
        )
        assert response.status_code == 400


class TestSessionEndpoints:
    """Test suite for step, state and delete endpoints."""

    def test_step(self, mock_manager):
        """Test tracking one frame returns the box and scores."""
        session = create_mock_session()
        mock_manager.get_session.return_value = session
        response = client.post("/track/step/abc", files={"frame": ("f.ppm", ppm_bytes(), "image/x-portable-pixmap")})
        assert response.status_code == 200
        body = response.json()
        assert body["box"] == [11.0, 13.0, 20.0, 16.0]
        assert (body["score"], body["iou_pred"], body["updated_slot"]) == (0.9, 0.7, 1)
        assert body["mask_area"] is None
        session.step.assert_called_once()

    def test_step_unknown_session(self, mock_manager):
        """Test an unknown session is a 404."""
        mock_manager.get_session.return_value = None
        response = client.post("/track/step/nope", files={"frame": ("f.ppm", ppm_bytes(), "image/x-portable-pixmap")})
        assert response.status_code == 404

    def test_state(self, mock_manager):
        """Test the session state is returned as stored."""
        mock_manager.get_session.return_value = create_mock_session()
        response = client.get("/track/state/abc")
        assert response.status_code == 200
        assert response.json()["frames"] == 2 and response.json()["template_updates"] == 1

    def test_delete(self, mock_manager):
        """Test deleting an existing session."""
        mock_manager.get_session.return_value = create_mock_session()
        response = client.delete("/track/abc")
        assert response.status_code == 200
        mock_manager.delete_session.assert_called_once_with("abc")

    def test_delete_unknown(self, mock_manager):
        """Test deleting an unknown session is a 404."""
        mock_manager.get_session.return_value = None
        assert client.delete("/track/nope").status_code == 404
