"""Prompting, parsing, backends and the call ledger for LLM-aided offspring."""

from cmoforge.llm.backends import (
    ConfigurationError,
    FailingBackend,
    LiveBackend,
    LLMBackend,
    OracleBackend,
    ReplayBackend,
    ReplayMiss,
    SurrogateBackend,
    SurrogateRefusal,
    TransportError,
)
from cmoforge.llm.generate import LLMConfig, Offspring, llm_generate
from cmoforge.llm.ledger import Exchange, Ledger, load_ledger, prompt_hash, read_ledger
from cmoforge.llm.parsing import (
    MissingTags,
    NonFinite,
    NonNumeric,
    ParsedVector,
    ParseError,
    WrongCount,
    parse_all,
    parse_response,
)
from cmoforge.llm.prompt import PROMPT_VERSION, EmptyPool, PromptBundle, build_prompt

__all__ = [
    "PROMPT_VERSION",
    "ConfigurationError",
    "EmptyPool",
    "Exchange",
    "FailingBackend",
    "LLMBackend",
    "LLMConfig",
    "Ledger",
    "LiveBackend",
    "MissingTags",
    "NonFinite",
    "NonNumeric",
    "Offspring",
    "OracleBackend",
    "ParseError",
    "ParsedVector",
    "PromptBundle",
    "ReplayBackend",
    "ReplayMiss",
    "SurrogateBackend",
    "SurrogateRefusal",
    "TransportError",
    "WrongCount",
    "build_prompt",
    "llm_generate",
    "load_ledger",
    "parse_all",
    "parse_response",
    "prompt_hash",
    "read_ledger",
]
