import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from src.ndtensor.tensor import Tensor, grad, no_grad, record_kinks

logger = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    name: str
    max_abs_err: float
    max_rel_err: float
    checked: int
    skipped: int
    rtol: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_err < self.rtol


def _same_pattern(a: list, b: list) -> bool:
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    name: str = "",
    h: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """
    Compare tape gradients of the scalar `fn()` against central differences.

    An element passes when |analytic - numeric| <= rtol * max(|analytic|, |numeric|, atol / rtol).
    Coordinates whose perturbation flips a ReLU/abs/clamp/min/max branch or an
    argmax selection are skipped, since the function is not differentiable there.
    """
    wide = all(t.data.dtype == np.float64 for t in inputs)
    h = h if h is not None else (1e-5 if wide else 1e-3)
    rtol = rtol if rtol is not None else (1e-5 if wide else 1e-2)
    atol = atol if atol is not None else (1e-8 if wide else 1e-5)
    rng = rng if rng is not None else np.random.default_rng(0)

    with record_kinks() as base_pattern:
        loss = fn()
    analytic = grad(loss, inputs)

    max_abs = max_rel = 0.0
    checked = skipped = 0
    for tensor, g in zip(inputs, analytic):
        tensor.data = np.ascontiguousarray(tensor.data)
        flat = tensor.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        g_flat = g.reshape(-1)
        for i in coords:
            original = flat[i]
            with no_grad():
                flat[i] = original + h
                with record_kinks() as plus_pattern:
                    f_plus = fn().item()
                flat[i] = original - h
                with record_kinks() as minus_pattern:
                    f_minus = fn().item()
            flat[i] = original
            if not (_same_pattern(base_pattern, plus_pattern) and _same_pattern(base_pattern, minus_pattern)):
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2 * h)
            err = abs(g_flat[i] - numeric)
            rel = err / max(abs(g_flat[i]), abs(numeric), atol / rtol)
            max_abs, max_rel = max(max_abs, err), max(max_rel, rel)
            checked += 1
    if skipped:
        logger.warning("gradcheck %s: skipped %d coordinates at non-smooth points", name, skipped)
    return GradCheckResult(name, float(max_abs), float(max_rel), checked, skipped, rtol)
