"""Bounded-backoff POST helper shared by the chat and embedding clients."""

from __future__ import annotations

import time

import httpx

from .errors import ProviderUnavailable, RateLimited


def post_with_retry(client: httpx.Client, url: str, payload: dict, *,
                    max_retries: int, backoff: float) -> dict:
    """POST with retries on connection errors, 429 and 5xx.

    Raises RateLimited if the final failure was a 429, ProviderUnavailable
    otherwise. 4xx other than 429 fails immediately (retrying won't help).
    """
    last_rate_limited = False
    last_error: Exception | None = None
    for attempt in range(max_retries + 1):
        if attempt:
            time.sleep(backoff * (2 ** (attempt - 1)))
        try:
            response = client.post(url, json=payload)
        except httpx.HTTPError as exc:
            last_error, last_rate_limited = exc, False
            continue
        if response.status_code == 429:
            last_error = ProviderUnavailable("rate limited (429)")
            last_rate_limited = True
            continue
        if response.status_code >= 500:
            last_error = ProviderUnavailable(f"server error ({response.status_code})")
            last_rate_limited = False
            continue
        if response.status_code >= 400:
            raise ProviderUnavailable(
                f"provider rejected request ({response.status_code}): {response.text[:200]}")
        try:
            return response.json()
        except ValueError as exc:
            raise ProviderUnavailable(f"non-JSON provider response: {exc}") from exc
    if last_rate_limited:
        raise RateLimited(f"retries exhausted after {max_retries + 1} attempts") from last_error
    raise ProviderUnavailable(
        f"retries exhausted after {max_retries + 1} attempts: {last_error}") from last_error
