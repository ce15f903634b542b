"""Bearer-token authentication with scopes.

Secrets are stored only as SHA-256 digests. Scopes: read_data,
submit_results, manage_models, annotate.
"""

from __future__ import annotations

import hashlib
from typing import Optional

from .errors import Unauthorized
from .model import ApiToken, utcnow


def digest_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode()).hexdigest()


def make_token(token_id: str, secret: str, scopes, expiry=None) -> ApiToken:
    return ApiToken(
        id=token_id,
        secret_digest=digest_secret(secret),
        scopes=frozenset(scopes),
        expiry=expiry,
    )


def authenticate(store, authorization: Optional[str]) -> ApiToken:
    """Resolve an Authorization header to a live token or raise Unauthorized."""
    if not authorization or not authorization.startswith("Bearer "):
        raise Unauthorized("missing bearer token")
    secret = authorization[len("Bearer ") :].strip()
    token = store.token_by_digest(digest_secret(secret))
    if token is None:
        raise Unauthorized("unknown token")
    if token.expiry is not None and token.expiry <= utcnow():
        raise Unauthorized("token expired")
    return token


def require_scope(token: ApiToken, scope: str) -> ApiToken:
    if scope not in token.scopes:
        raise Unauthorized(f"token {token.id} lacks scope {scope}")
    return token
