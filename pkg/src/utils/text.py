import re
from typing import List

# Closed list shared by the rule tagger and the query filter.
STOPWORDS = frozenset({
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by",
    "for", "with", "about", "to", "from", "in", "on", "is", "are", "was",
    "were", "be", "been", "it", "its", "this", "that", "these", "those", "they",
    "them", "he", "she", "his", "her", "we", "you", "i", "what", "which",
    "who", "whom", "how", "when", "where", "as", "not", "no", "do", "does",
})

_WORD_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> List[str]:
    """Lowercased word tokens; whitespace, punctuation and underscores separate tokens."""
    return _WORD_RE.findall(text.lower())


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())
