"""HTTP surface: /info, /tokenize, /detokenize, /fill_mask.

Field names and shapes follow the shared wire schema
(schema/wire_protocol.json at the repository root); malformed requests get a
400 carrying the offending field name.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .model import FillMaskQuery, RequestError, ServedModel


class TokenizeRequest(BaseModel):
    text: str
    add_prefix_space: bool = False


class DetokenizeRequest(BaseModel):
    token_ids: list[int]


class FillMaskRequestBody(BaseModel):
    text: str
    top_n: int = Field(ge=1)
    query_token_ids: list[int] = Field(default_factory=list)


def create_app(served: ServedModel) -> FastAPI:
    app = FastAPI(title="fillmask-server", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        fields = sorted(
            {str(e["loc"][-1]) for e in exc.errors() if e.get("loc")} or {"body"}
        )
        return JSONResponse(
            status_code=400,
            content={"error": "invalid request", "fields": fields},
        )

    @app.exception_handler(RequestError)
    async def request_error_handler(request: Request, exc: RequestError):
        return JSONResponse(
            status_code=400,
            content={"error": str(exc), "fields": [exc.field_name]},
        )

    @app.get("/info")
    def info():
        return served.info()

    @app.post("/tokenize")
    def tokenize(body: TokenizeRequest):
        return {"token_ids": served.tokenize(body.text, body.add_prefix_space)}

    @app.post("/detokenize")
    def detokenize(body: DetokenizeRequest):
        return {"text": served.detokenize(body.token_ids)}

    @app.post("/fill_mask")
    def fill_mask(body: FillMaskRequestBody):
        masks = served.fill_mask(
            FillMaskQuery(
                text=body.text,
                top_n=body.top_n,
                query_token_ids=tuple(body.query_token_ids),
            )
        )
        return {
            "masks": [
                {
                    "position": m.position,
                    "top": [[token_id, logprob] for token_id, logprob in m.top],
                    "queried": {str(token_id): logprob for token_id, logprob in m.queried.items()},
                }
                for m in masks
            ]
        }

    return app
