from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from src.ndtensor.errors import UsageError
from src.transt.attention import TokenSeq
from src.transt.fusion import combine_token_seqs


@dataclass
class TemplateSlot:
    tokens: TokenSeq
    patch: np.ndarray
    inserted_at: int = 0


@dataclass
class TemplateBank:
    """
    Up to `capacity` templates. Slot 0 holds the initial template and is never
    replaced; updates overwrite the oldest of the remaining slots.
    """

    capacity: int
    slots: list[TemplateSlot] = field(default_factory=list)
    updates: int = 0

    @classmethod
    def initial(cls, tokens: TokenSeq, patch: np.ndarray, capacity: int) -> "TemplateBank":
        if capacity < 1:
            raise UsageError(f"template bank needs capacity >= 1, got {capacity}")
        return cls(capacity, [TemplateSlot(tokens, patch) for _ in range(capacity)])

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def initial_slot(self) -> TemplateSlot:
        return self.slots[0]

    def replace_oldest(self, tokens: TokenSeq, patch: np.ndarray) -> int:
        """Store a new template in the oldest non-initial slot; returns its index, or -1 if M = 1."""
        if self.capacity == 1:
            return -1
        self.updates += 1
        index = min(range(1, len(self.slots)), key=lambda i: self.slots[i].inserted_at)
        self.slots[index] = TemplateSlot(tokens, patch, self.updates)
        return index


def combine_templates(bank: TemplateBank, mode: Literal["concat", "avg"] = "concat") -> TokenSeq:
    if not bank.slots:
        raise UsageError("template bank is empty")
    return combine_token_seqs([slot.tokens for slot in bank.slots], mode)
