from __future__ import annotations

import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from texgen_service import create_app


def b64_rgb(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8), "RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def b64_gray(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8), "L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def decode_rgb(payload: str) -> np.ndarray:
    return np.array(Image.open(io.BytesIO(base64.b64decode(payload))).convert("RGB"))


def checker(size: int, check: int, c0=(220, 60, 40), c1=(40, 80, 220)) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    m = ((yy // check) + (xx // check)) % 2 == 0
    out = np.zeros((size, size, 3), np.uint8)
    out[m] = c0
    out[~m] = c1
    return out


def generate_payload(size: int = 32, **kw) -> dict:
    edge = np.zeros((size, size), np.uint8)
    edge[:, size // 2] = 255
    fg = np.full((size, size), 255, np.uint8)
    base = dict(
        edge_map=b64_gray(edge),
        foreground_mask=b64_gray(fg),
        reference_image=b64_rgb(checker(size, max(2, size // 4))),
        prompt="a test object",
        negative_prompt="",
        lambda_ip=0.7,
        lambda_cn=1.0,
        seed=9,
        width=size,
        height=size,
        keep_image=None,
        keep_mask=None,
        concept_id=None,
    )
    base.update(kw)
    return base


@pytest.fixture(scope="session")
def procedural_client() -> TestClient:
    return TestClient(create_app(mode="procedural"))


@pytest.fixture(scope="session")
def real_client() -> TestClient:
    return TestClient(create_app(mode="real"))
