"""Versioned YAML configuration for link simulations."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).with_name("data")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CcdmSettings(_Strict):
    composition: tuple[int, ...] = (318, 208, 89, 25)
    input_bits: int | None = 1014

    @field_validator("composition")
    @classmethod
    def _positive(cls, v):
        if not v or any(c < 0 for c in v) or sum(v) == 0:
            raise ValueError("composition counts must be non-negative and not all zero")
        return v


class DecoderSettings(_Strict):
    variant: Literal["min-sum", "sum-product"] = "min-sum"
    max_iter: int = Field(20, ge=1)
    alpha: float = Field(0.75, gt=0, le=1)


class SimConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    dm: Literal["hidm", "ccdm", "none"]
    hidm_tree: str | None = None
    ccdm: CcdmSettings = CcdmSettings()
    code: str | None = None
    snr_db: tuple[float, ...]
    seed: int
    max_codewords: int = Field(10_000, ge=1)
    min_codewords: int = Field(0, ge=0)
    target_errors: int = Field(200, ge=1)
    batch_groups: int = Field(4, ge=1)
    codewords_per_group: int | None = Field(None, ge=1)
    demap_input_bits: int = Field(7, ge=1, le=16)
    llr_bits: int = Field(4, ge=1, le=8)
    otuc_n: int = Field(1, ge=1)
    decoder: DecoderSettings = DecoderSettings()

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v} (expected {SCHEMA_VERSION})")
        return v

    @field_validator("snr_db")
    @classmethod
    def _snrs(cls, v):
        if not v:
            raise ValueError("at least one SNR point required")
        if any(math.isnan(x) or x == -math.inf for x in v):
            raise ValueError("SNR values must be numbers or +inf")
        return v

    @model_validator(mode="after")
    def _hidm_tree_only_for_hidm(self):
        if self.hidm_tree is not None and self.dm != "hidm":
            raise ValueError("hidm_tree given but dm is not 'hidm'")
        return self

    @property
    def otuc_block_bits(self) -> int:
        return 130560 * self.otuc_n

    def resolve(self, name: str | None, default: str, base: Path | None = None) -> Path:
        if name is None:
            return DATA_DIR / default
        p = Path(name)
        if not p.is_absolute() and base is not None and (base / p).exists():
            return base / p
        if not p.exists() and (DATA_DIR / p).exists():
            return DATA_DIR / p
        return p

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def load_config(path) -> SimConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return SimConfig.model_validate(data)
