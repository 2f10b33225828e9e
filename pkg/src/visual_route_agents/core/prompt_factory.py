"""
Prompt Factory Module

This module produces the Initializer, Critic and Scorer prompts from the
versioned template files shipped under visual_route_agents/prompts/.
"""

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Literal, Optional

from .errors import DomainError

AgentRole = Literal["initializer", "critic", "scorer"]

PROMPT_DIR = Path(__file__).parent.parent / "prompts"
TEMPLATE_FILES = {
    "initializer": "initializer.txt",
    "critic": "critic.txt",
    "scorer": "scorer.txt",
}


@dataclass(frozen=True)
class PromptText:
    """
    A fully substituted agent prompt.

    Attributes:
        role: Agent role the prompt addresses
        text: Prompt string sent to the backend
        m: Salesman count (route prompts)
        k: Image count (scorer prompt)
        template_hash: Digest of the template file the text came from
    """

    role: AgentRole
    text: str
    m: Optional[int] = None
    k: Optional[int] = None
    template_hash: str = ""

    def to_dict(self) -> Dict:
        return {"role": self.role, "text": self.text, "m": self.m, "k": self.k,
                "template_hash": self.template_hash}

    @classmethod
    def from_dict(cls, data: Dict) -> "PromptText":
        return cls(role=data["role"], text=data["text"], m=data.get("m"), k=data.get("k"),
                   template_hash=data.get("template_hash", ""))


@lru_cache(maxsize=None)
def load_template(role: str) -> str:
    """Read a prompt template file."""
    if role not in TEMPLATE_FILES:
        raise DomainError(f"Unknown agent role: {role}")
    return (PROMPT_DIR / TEMPLATE_FILES[role]).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def template_hash(role: str) -> str:
    return hashlib.sha256(load_template(role).encode("utf-8")).hexdigest()


def template_hashes() -> Dict[str, str]:
    """Digest of every template, recorded in run manifests."""
    return {role: template_hash(role) for role in TEMPLATE_FILES}


def _route_format_lines(m: int) -> str:
    return "".join(f"Salesman{i}: Depot-Node1-Node2-...-Depot\n" for i in range(1, m + 1))


def _route_prompt(role: AgentRole, m: int) -> PromptText:
    if m < 1:
        raise DomainError(f"Salesman count must be at least 1, got {m}")
    text = load_template(role).format(num_salesmen=m, format_lines=_route_format_lines(m))
    return PromptText(role=role, text=text, m=m, template_hash=template_hash(role))


def initializer_prompt(m: int) -> PromptText:
    """Prompt asking for m routes from the bare instance image."""
    return _route_prompt("initializer", m)


def critic_prompt(m: int) -> PromptText:
    """Initializer prompt plus the instruction to improve the routes shown in the image."""
    return _route_prompt("critic", m)


def _score_format(k: int) -> str:
    if k <= 3:
        return ", ".join(f"image{i}: score" for i in range(1, k + 1))
    return f"image1: score, image2: score, ..., image{k}: score"


def scorer_prompt(k: int = 7) -> PromptText:
    """
    Prompt asking the Scorer to rate k candidate images and name the best one.

    Args:
        k: Number of images attached to the call

    Returns:
        PromptText with role 'scorer'
    """
    if k < 2:
        raise DomainError(f"Scoring needs at least 2 images, got {k}")
    text = load_template("scorer").format(num_images=k, score_format=_score_format(k))
    return PromptText(role="scorer", text=text, k=k, template_hash=template_hash("scorer"))
