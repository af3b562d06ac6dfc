from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from ..errors import NoJsonFound, SchemaError
from ..history import IterationRecord
from ..params import DesignParams, ParamSpace, clamp


@dataclass(frozen=True)
class Proposal:
    params: DesignParams
    rationale: str
    raw_response: str = ""
    parse_retries: int = 0


class Agent(Protocol):
    """Anything the loop can ask for the next design."""

    name: str

    def propose(self, history: Sequence[IterationRecord]) -> Proposal: ...

    def recover(
        self,
        history: Sequence[IterationRecord],
        last_good: Optional[IterationRecord],
        failed: DesignParams,
        diagnostic: str,
    ) -> Proposal: ...


def params_block(params: DesignParams) -> str:
    """The JSON rendering of a design used verbatim in prompts."""
    return json.dumps(params.to_dict(), indent=2)


def parse_proposal(text: str, space: ParamSpace) -> Proposal:
    """
    Take the first JSON object in ``text`` (prose and code fences around it
    are fine), read it as DesignParams plus an optional ``rationale`` and
    clamp it into ``space``.
    """
    decoder = json.JSONDecoder()
    obj = None
    start = text.find("{")
    while start != -1:
        try:
            candidate, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            start = text.find("{", start + 1)
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
        start = text.find("{", start + 1)
    if obj is None:
        raise NoJsonFound("response contains no JSON object")

    rationale = obj.pop("rationale", "")
    if not isinstance(rationale, str):
        raise SchemaError(f"rationale must be a string, got {type(rationale).__name__}")
    params = DesignParams.from_dict(obj)
    return Proposal(params=clamp(params, space), rationale=rationale.strip(), raw_response=text)
