"""Named backend profiles so runs select implementations by string."""

from __future__ import annotations

from .embeddings import HashingEmbedder, SentenceTransformerEmbedder
from .errors import ConfigError
from .harness import EchoBackend, LeadBackend, OpenAIChatBackend, PromptTemplate
from .metrics import CharHashEncoder, TransformersEncoder
from .recall_metrics import HttpDiscriminator, containment_oracle


def make_backend(name: str, template: PromptTemplate | None = None, context_limit: int | None = None):
    """``echo``, ``lead`` or ``openai:<model>`` (credentials from env)."""
    if name == "echo":
        return EchoBackend(context_limit=context_limit)
    if name == "lead":
        return LeadBackend(template, context_limit=context_limit)
    if name.startswith("openai:"):
        return OpenAIChatBackend(name.split(":", 1)[1], context_limit=context_limit)
    raise ConfigError([f"unknown backend profile {name!r} (echo, lead, openai:<model>)"])


def make_discriminator(name: str):
    """``containment`` or the base URL of a remote judge service."""
    if name == "containment":
        return containment_oracle()
    if name.startswith(("http://", "https://")):
        return HttpDiscriminator(name)
    raise ConfigError([f"unknown discriminator profile {name!r} (containment, http(s)://...)"])


def make_encoder(name: str):
    if name == "char-hash":
        return CharHashEncoder()
    if name.startswith("hf:"):
        return TransformersEncoder(name.split(":", 1)[1])
    raise ConfigError([f"unknown encoder profile {name!r} (char-hash, hf:<model>)"])


def make_embedder(name: str):
    if name == "hashing":
        return HashingEmbedder()
    if name.startswith("st:"):
        return SentenceTransformerEmbedder(name.split(":", 1)[1])
    raise ConfigError([f"unknown embedder profile {name!r} (hashing, st:<model>)"])
