from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

VARIANTS = ("G+L+MA", "G+L+SA", "G+L", "G+SA", "L", "L+MA")
N_CLASSES = 6


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters; ``variant`` selects the sub-stacks.

    ``d_k``/``d_v`` default to ``d // n_heads`` so concatenated heads keep the
    temporal embedding width.  Single-head variants force ``n_heads = 1``.
    """

    variant: str = "G+L+MA"
    embed_dim: int = 128
    mrgcn_dims: tuple = (128, 32)
    T: int = 10
    n_heads: int = 4
    d_k: Optional[int] = None
    d_v: Optional[int] = None
    baseline_hidden: int = 32
    n_max: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        object.__setattr__(self, "mrgcn_dims", tuple(int(d) for d in self.mrgcn_dims))
        if not self.mrgcn_dims or any(d <= 0 for d in self.mrgcn_dims):
            raise ValueError("mrgcn_dims must be a non-empty list of positive widths")
        if self.heads < 1:
            raise ValueError("n_heads must be >= 1")

    # ---------------------------------------------------------- sub-stacks
    @property
    def uses_graph(self) -> bool:
        return self.variant.startswith("G")

    @property
    def uses_lstm(self) -> bool:
        return "L" in self.variant.split("+")

    @property
    def uses_attention(self) -> bool:
        return self.variant.endswith("MA") or self.variant.endswith("SA")

    @property
    def heads(self) -> int:
        return 1 if self.variant.endswith("SA") else int(self.n_heads)

    @property
    def temporal_dim(self) -> int:
        """Width of the per-frame vectors fed to attention / pooling."""
        if self.uses_graph:
            return self.mrgcn_dims[-1]
        return self.baseline_hidden

    @property
    def key_dim(self) -> int:
        return int(self.d_k) if self.d_k else max(1, self.temporal_dim // self.heads)

    @property
    def value_dim(self) -> int:
        return int(self.d_v) if self.d_v else max(1, self.temporal_dim // self.heads)

    @property
    def head_dim(self) -> int:
        return self.heads * self.value_dim if self.uses_attention else self.temporal_dim

    # ------------------------------------------------------------- JSON
    def to_dict(self) -> dict:
        d = asdict(self)
        d["mrgcn_dims"] = list(self.mrgcn_dims)
        return d

    @classmethod
    def from_dict(cls, blob: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(blob) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**blob)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]
