"""Small retrying POST helper shared by the embedding and chat clients."""

from __future__ import annotations

import time
from typing import Callable

import httpx

from .errors import EndpointUnavailable

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.2


def post_json_with_retries(
    client: httpx.Client,
    url: str,
    payload: dict,
    attempts: int = RETRY_ATTEMPTS,
    backoff_s: float = RETRY_BACKOFF_S,
    sleep: Callable[[float], None] = time.sleep,
) -> httpx.Response:
    """POST JSON, retrying transport errors, 429 and 5xx with exponential backoff.

    Returns the response for any other status (including 4xx); the caller
    interprets those. Raises EndpointUnavailable once retries are exhausted.
    """
    last = "no attempt made"
    for attempt in range(attempts):
        try:
            resp = client.post(url, json=payload)
        except httpx.HTTPError as exc:
            last = f"transport error: {exc}"
        else:
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
            else:
                return resp
        if attempt + 1 < attempts:
            sleep(backoff_s * (2**attempt))
    raise EndpointUnavailable(f"POST {url} failed after {attempts} attempts ({last})")
