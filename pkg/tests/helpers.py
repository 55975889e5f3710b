"""Gateway stand-ins shared across test modules."""

from __future__ import annotations

from processlens.errors import ProviderUnavailable
from processlens.gateway import LlmGateway, MockProvider, ProviderConfig


def mock_gateway(**config_overrides) -> LlmGateway:
    return LlmGateway(MockProvider(), ProviderConfig(**config_overrides), label="mock")


class ScriptedProvider:
    """Returns canned responses in order; records the prompts it saw."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.seen: list[str] = []

    def complete(self, system_text: str, user_text: str) -> str:
        self.seen.append(user_text)
        if not self.responses:
            raise AssertionError("scripted provider ran out of responses")
        return self.responses.pop(0)


def scripted_gateway(*responses) -> tuple[LlmGateway, ScriptedProvider]:
    provider = ScriptedProvider(responses)
    return LlmGateway(provider, ProviderConfig(), label="scripted"), provider


class FailingProvider:
    def complete(self, system_text: str, user_text: str) -> str:
        raise ProviderUnavailable("injected outage")


def failing_gateway() -> LlmGateway:
    return LlmGateway(FailingProvider(), ProviderConfig(), label="failing")


class FaultyGateway:
    """Delegates to a real gateway but fails when the trigger matches.

    The trigger is a predicate over the rendered prompt, so a test can fail
    exactly one activity and leave the rest of the run untouched.
    """

    def __init__(self, inner: LlmGateway, should_fail):
        self.inner = inner
        self.should_fail = should_fail
        self.label = inner.label

    def complete(self, prompt):
        if self.should_fail(prompt):
            raise ProviderUnavailable("injected fault")
        return self.inner.complete(prompt)
