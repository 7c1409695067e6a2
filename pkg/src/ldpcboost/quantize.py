"""Uniform message quantization with saturation.

The decoder runs either on float values or on a symmetric uniform grid
{-L, ..., -step, 0, step, ..., L}. quantize() rounds to the nearest grid
point (ties to even, the IEEE default) and clamps to +-L. For gradient
checks there is a third mode that only clamps, which is exactly the
straight-through surrogate of the uniform mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("float", "uniform", "clip")


@dataclass(frozen=True)
class Quantizer:
    mode: str = "uniform"
    step: float = 0.5
    max_magnitude: float = 7.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown quantizer mode {self.mode!r}")
        if self.mode != "float":
            if self.step <= 0 or self.max_magnitude <= 0:
                raise ValueError("step and max_magnitude must be positive")

    @property
    def num_levels(self) -> int:
        """Grid size, e.g. 31 for step 0.5 and max 7.5."""
        if self.mode == "float":
            return 0
        return 2 * int(round(self.max_magnitude / self.step)) + 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.mode == "float":
            return x
        if self.mode == "clip":
            return np.clip(x, -self.max_magnitude, self.max_magnitude)
        return np.clip(np.rint(x / self.step) * self.step,
                       -self.max_magnitude, self.max_magnitude)

    def pass_mask(self, x: np.ndarray) -> np.ndarray:
        """Straight-through mask: 1 inside [-L, L], 0 in the saturated region."""
        if self.mode == "float":
            return np.ones_like(np.asarray(x, dtype=np.float64), dtype=bool)
        return np.abs(np.asarray(x)) <= self.max_magnitude

    def on_grid(self, x: np.ndarray, atol: float = 0.0) -> bool:
        """True if every value already lies on the quantizer grid."""
        x = np.asarray(x, dtype=np.float64)
        if self.mode == "float":
            return True
        if np.any(np.abs(x) > self.max_magnitude + atol):
            return False
        if self.mode == "clip":
            return True
        r = x / self.step
        return bool(np.all(np.abs(r - np.rint(r)) <= atol))

    def smoothed(self) -> "Quantizer":
        """The straight-through surrogate used by finite-difference checks."""
        if self.mode == "uniform":
            return Quantizer("clip", self.step, self.max_magnitude)
        return self

    def to_jsonable(self) -> dict:
        if self.mode == "float":
            return {"mode": "float"}
        return {"mode": self.mode, "step": self.step, "max_magnitude": self.max_magnitude}

    @classmethod
    def from_jsonable(cls, d: dict) -> "Quantizer":
        if d.get("mode", "float") == "float":
            return cls("float", 0.5, 7.5)
        return cls(d["mode"], float(d["step"]), float(d["max_magnitude"]))


FLOAT = Quantizer("float", 0.5, 7.5)
FIVE_BIT = Quantizer("uniform", 0.5, 7.5)
COARSE = Quantizer("uniform", 1.0, 15.0)
