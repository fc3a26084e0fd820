"""Strategy generators: where new projection programs come from.

Both generators speak the same interface: generate(operator, parents,
generation, slot) -> (description, source). Operators follow the classic
evolutionary split: E1 proposes a fresh design, E2 combines two parents, M1
changes a parent's structure, M2 only nudges its numeric constants.

MockGenerator needs no network: it maps each operator onto the corresponding
deterministic DSL mutation. LlmGenerator posts a prompt to an
OpenAI-compatible chat endpoint configured through environment variables and
parses the reply; malformed replies raise GeneratorError so the caller can
count the failure and move on.
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request

import numpy as np

from . import dsl

OPERATORS = ("E1", "E2", "M1", "M2")

_MUTATION_FOR = {
    "E1": "fresh",
    "E2": "crossover",
    "M1": "replace_step",
    "M2": "perturb_consts",
}

_OPERATOR_BRIEF = {
    "E1": "Design a new projection program as different as possible from the parents.",
    "E2": "Combine the ideas of the two parent programs into one new program.",
    "M1": "Modify the structure of the first parent program to improve it.",
    "M2": "Keep the first parent program's structure and only adjust its numeric constants.",
}


class GeneratorError(RuntimeError):
    pass


class MockGenerator:
    """Deterministic, offline stand-in for the LLM."""

    name = "mock"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)

    def generate(self, operator, parents, generation, slot):
        if operator not in OPERATORS:
            raise GeneratorError(f"unknown operator {operator!r}")
        rng = np.random.default_rng((self.seed, generation, slot))
        progs = [dsl.parse(src) for _, src in parents]
        if not progs:
            progs = [dsl.IDENTITY_PROGRAM, dsl.IDENTITY_PROGRAM]
        elif len(progs) == 1:
            progs = progs * 2
        draft = dsl.mutate(_MUTATION_FOR[operator], progs, rng)
        desc = f"{operator} ({_MUTATION_FOR[operator]}) variant from generation {generation}"
        return desc, dsl.serialize(draft)


_PROMPT_HEADER = """\
You are designing coordinate projection strategies for a routing constructor.
A strategy is a short program in this language (statements run left to right
over the subgraph matrix [anchor | candidates | current]):

{grammar}

Write programs that map raw subgraph coordinates into a well-scaled frame
(roughly the unit square) so that a distance-sensitive scorer works well.
"""

_GRAMMAR = """\
program  := stmt (";" stmt)*
stmt     := "window" ("all" | "exclude_first")
          | "translate" anchor | "mirror" anchor
          | "scale" ("range_max" | "norm_max" | "sqrt_norm_max" | "const" NUMBER)
          | "map" ("tanh" | "expm1" | "identity")
          | "add" (anchor | NUMBER NUMBER)
          | "clip_unit"
anchor   := "min" | "max" | "mid" | "centroid" | "first" | "last" | "depot"
"""

_PROMPT_FOOTER = """\
Reply with exactly two parts:
1. a one-sentence description of the idea inside curly braces {like this}
2. the program itself inside a fenced code block
"""


def build_prompt(operator: str, parents) -> str:
    lines = [_PROMPT_HEADER.format(grammar=_GRAMMAR)]
    if parents:
        lines.append("Existing strategies:")
        for i, (desc, src) in enumerate(parents, 1):
            lines.append(f"  parent {i}: {desc}\n    program: {src}")
    lines.append(_OPERATOR_BRIEF.get(operator, ""))
    lines.append(_PROMPT_FOOTER)
    return "\n".join(lines)


def parse_reply(text: str) -> tuple[str, str]:
    """Extract (description, program source) from a generator reply."""
    m_desc = re.search(r"\{(.+?)\}", text, re.DOTALL)
    if not m_desc:
        raise GeneratorError("reply has no {description} part")
    m_code = re.search(r"```[^\n`]*\n?(.*?)```", text, re.DOTALL)
    if not m_code:
        raise GeneratorError("reply has no fenced code block")
    source = " ".join(m_code.group(1).split())
    try:
        program = dsl.parse(source)
    except dsl.DslError as exc:
        raise GeneratorError(f"reply program does not parse: {exc}") from None
    return " ".join(m_desc.group(1).split()), dsl.serialize(program)


class LlmGenerator:
    """Talks to an OpenAI-compatible /chat/completions endpoint.

    Configuration comes from LLM_ENDPOINT (required), LLM_API_KEY (optional)
    and LLM_MODEL (default "default") unless given explicitly.
    """

    name = "llm"

    def __init__(self, endpoint=None, api_key=None, model=None, timeout=60.0, max_retries=2, temperature=1.0):
        self.endpoint = endpoint or os.environ.get("LLM_ENDPOINT")
        if not self.endpoint:
            raise ValueError("LLM generator needs LLM_ENDPOINT (or an explicit endpoint)")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self.model = model or os.environ.get("LLM_MODEL", "default")
        self.timeout = timeout
        self.max_retries = max_retries
        self.temperature = temperature

    def _post(self, prompt: str) -> str:
        payload = json.dumps(
            {
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
            }
        ).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=payload, headers=headers)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode())
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise GeneratorError(f"LLM request failed: {exc}") from None
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise GeneratorError("LLM response missing choices[0].message.content") from None

    def generate(self, operator, parents, generation, slot):
        if operator not in OPERATORS:
            raise GeneratorError(f"unknown operator {operator!r}")
        prompt = build_prompt(operator, parents)
        last: GeneratorError | None = None
        for _ in range(self.max_retries + 1):
            try:
                return parse_reply(self._post(prompt))
            except GeneratorError as exc:
                last = exc
        raise last


def make_generator(name: str, seed: int = 0):
    if name == "mock":
        return MockGenerator(seed)
    if name == "llm":
        return LlmGenerator()
    raise KeyError(f"unknown generator {name!r}; available: mock, llm")
