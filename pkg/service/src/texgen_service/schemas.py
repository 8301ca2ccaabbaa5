"""Pydantic models for the wire protocol."""

from __future__ import annotations

from pydantic import BaseModel, Field


class GenerateRequest(BaseModel):
    edge_map: str
    foreground_mask: str
    reference_image: str
    prompt: str
    negative_prompt: str = ""
    lambda_ip: float = Field(ge=0.0, le=2.0)
    lambda_cn: float = Field(ge=0.0, le=2.0)
    seed: int
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    keep_image: str | None = None
    keep_mask: str | None = None
    concept_id: str | None = None


class GenerateResponse(BaseModel):
    image: str
    seed_used: int
    backend: str


class InvertRequest(BaseModel):
    image: str
    steps: int = Field(ge=1)
    seed: int


class InvertResponse(BaseModel):
    concept_id: str
    loss_trace: list[float] | None = None


class Health(BaseModel):
    status: str
    backend: str
    mode: str
    models: list[str]
    sampler: str
    steps: int
