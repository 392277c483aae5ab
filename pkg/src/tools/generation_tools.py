import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Union

import requests

from src.errors import GeneratorUnavailable
from src.tools.prompt_tools import NA_ANSWER, PromptBundle

logger = logging.getLogger(__name__)

BUILTIN_NA = "builtin:na"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.1
    max_tokens: int = 4096
    top_p: float = 0.95


class GeneratorClient:
    """Calls POST {endpoint}/generate with the prompt bundle and returns the raw response text."""

    def __init__(self, endpoint: str, params: GenerationParams = GenerationParams(), timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.params = params
        self.timeout = timeout

    def __call__(self, bundle: PromptBundle) -> str:
        start = time.time()
        try:
            response = requests.post(
                f"{self.endpoint}/generate",
                json={"system": bundle.system, "user": bundle.user, **asdict(self.params)},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise GeneratorUnavailable(self.endpoint, str(e))
        if response.status_code != 200:
            logger.error(f"Generator response error: {response.status_code} - {response.text[:200]}")
            raise GeneratorUnavailable(self.endpoint, f"HTTP {response.status_code}")
        try:
            text = response.json()["text"]
        except (ValueError, KeyError, TypeError) as e:
            raise GeneratorUnavailable(self.endpoint, f"malformed response: {e}")
        logger.debug(f"Generation took {time.time() - start:.2f}s")
        return str(text)


def na_generator(bundle: PromptBundle) -> str:
    return f"<reasoning>No generator configured.</reasoning><answer>{NA_ANSWER}</answer>"


Generator = Callable[[PromptBundle], str]


def make_generator(endpoint: Union[str, None], params: GenerationParams = GenerationParams()) -> Generator:
    if not endpoint or endpoint == BUILTIN_NA:
        logger.info("Using the builtin NA generator (no model endpoint configured)")
        return na_generator
    return GeneratorClient(endpoint, params)
