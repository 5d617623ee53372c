"""Request and response records seen by clients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ImageTensor
from ..errors import InvalidInput
from .trace import Span


@dataclass(eq=False)
class Request:
    """One client request. Pixels are kept as 8-bit (h, w, c), the form
    they travel in; ``image`` rebuilds the float view on demand."""

    request_id: int
    pixels: np.ndarray
    prompt_tokens: tuple
    decode_len: int
    arrival_time: float = 0.0  # seconds after load start
    tile_labels: tuple = ()  # ground truth for the synthetic task, if known

    def __post_init__(self):
        self.prompt_tokens = tuple(int(t) for t in self.prompt_tokens)
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[0] == 0 or px.shape[1] == 0:
            raise InvalidInput("pixels must be a non-empty uint8 array of shape (h, w, c)")
        self.pixels = px
        if self.decode_len < 1:
            raise InvalidInput("decode_len must be >= 1")
        if not self.prompt_tokens:
            raise InvalidInput("prompt must be non-empty")

    @classmethod
    def from_image(cls, request_id: int, image: ImageTensor, prompt_tokens, decode_len: int,
                   **kw) -> "Request":
        return cls(request_id, image.to_uint8(), prompt_tokens, decode_len, **kw)

    @property
    def image(self) -> ImageTensor:
        return ImageTensor.from_uint8(self.pixels)

    def pixels_u8(self) -> np.ndarray:
        return self.pixels

    def meta(self, with_image: bool = True) -> dict:
        m = {"request_id": self.request_id, "prompt": list(self.prompt_tokens), "decode_len": self.decode_len}
        if with_image:
            h, w, c = self.pixels.shape
            m.update(height=h, width=w, channels=c)
        return m


@dataclass(frozen=True)
class Timings:
    vision_done: int
    features_received: int
    prefill_done: int
    decode_done: int

    def monotone(self) -> bool:
        return self.vision_done <= self.features_received <= self.prefill_done <= self.decode_done


@dataclass
class Response:
    request_id: int
    ok: bool
    output_tokens: tuple = ()
    answers: tuple = ()
    tile_tokens: tuple = ()
    timings: Timings | None = None
    spans: list = field(default_factory=list)
    error: str = ""
    submitted_ns: int = 0
    completed_ns: int = 0

    @property
    def visual_tokens(self) -> int:
        return int(sum(self.tile_tokens))

    @property
    def latency_s(self) -> float:
        return (self.completed_ns - self.submitted_ns) / 1e9

    @classmethod
    def from_result(cls, result: dict, vision: dict | None = None) -> "Response":
        rid = int(result["request_id"])
        if not result.get("ok"):
            return cls(rid, False, error=result.get("error", "failed"))
        vision_done = vision["vision_done"] if vision else result["vision_done"]
        spans = [Span.from_list(rid, s) for s in (vision or {}).get("spans", [])]
        spans += [Span.from_list(rid, s) for s in result.get("spans", [])]
        return cls(
            rid,
            True,
            tuple(result["output_tokens"]),
            tuple(result.get("answers", ())),
            tuple(result.get("tile_tokens", ())),
            Timings(int(vision_done), int(result["features_received"]),
                    int(result["prefill_done"]), int(result["decode_done"])),
            spans,
        )
