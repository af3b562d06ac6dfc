from .baseline import BaselineAgent, ScoreBreakdown, best_record, hinge_score, propose_baseline, record_score, score_breakdown
from .llm import LLMAgent, LLMConfig, OpenAIChatClient, TranscriptClient, propose_llm, request_hash
from .prompts import GUIDANCE_MODES, GuidanceMode, build_prompt, build_recovery_prompt
from .proposal import Agent, Proposal, params_block, parse_proposal

__all__ = [
    "Agent",
    "BaselineAgent",
    "GUIDANCE_MODES",
    "GuidanceMode",
    "LLMAgent",
    "LLMConfig",
    "OpenAIChatClient",
    "Proposal",
    "ScoreBreakdown",
    "TranscriptClient",
    "best_record",
    "build_prompt",
    "build_recovery_prompt",
    "hinge_score",
    "params_block",
    "parse_proposal",
    "propose_baseline",
    "propose_llm",
    "record_score",
    "request_hash",
    "score_breakdown",
]
