"""Language-model agent: prompts, response parsing, HTTP client and mocks."""

from .client import (
    API_KEY_ENV,
    AgentUnavailable,
    ChatClient,
    ChatLLMAgent,
    LlmEndpointConfig,
    Transcript,
    TransportError,
    propose_llm,
)
from .confidence import ConfidenceLevel, ParseError, levels_to_proposal, parse_response, render_levels
from .mocks import FixedProposalAgent, QuadraticMockAgent, ScriptedLevelsAgent
from .news import load_news, missing_news
from .prompt import PromptContext, build_prompt

__all__ = [
    "API_KEY_ENV",
    "AgentUnavailable",
    "ChatClient",
    "ChatLLMAgent",
    "ConfidenceLevel",
    "FixedProposalAgent",
    "LlmEndpointConfig",
    "ParseError",
    "PromptContext",
    "QuadraticMockAgent",
    "ScriptedLevelsAgent",
    "Transcript",
    "TransportError",
    "build_prompt",
    "levels_to_proposal",
    "load_news",
    "missing_news",
    "parse_response",
    "propose_llm",
    "render_levels",
]
