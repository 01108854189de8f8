"""Substitution lexicons and the bundled stopword list."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError

ASSETS_DIR = Path(__file__).resolve().parent.parent / "assets"


@dataclass(frozen=True)
class SynonymLexicon:
    entries: dict[str, tuple[str, ...]]

    def get(self, word: str) -> tuple[str, ...]:
        return self.entries.get(word.lower(), ())

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_lexicon(path: str | Path) -> SynonymLexicon:
    """Parse `word<TAB>sub1,sub2,...` lines; keys casefolded, self-maps dropped."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"lexicon file not found: {path}")
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise ConfigError(f"malformed lexicon line {lineno} in {path.name}: missing tab")
        word, _, subs = line.partition("\t")
        word = word.strip().lower()
        substitutes = []
        for sub in subs.split(","):
            sub = sub.strip().lower()
            if sub and sub != word and sub not in substitutes:
                substitutes.append(sub)
        if word and substitutes:
            entries[word] = tuple(substitutes)
    return SynonymLexicon(entries)


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    path = Path(path) if path else ASSETS_DIR / "stopwords.txt"
    if not path.exists():
        raise ConfigError(f"stopword file not found: {path}")
    words = [w.strip().lower() for w in path.read_text(encoding="utf-8").split() if w.strip()]
    return frozenset(words)


def default_synonyms() -> SynonymLexicon:
    return load_lexicon(ASSETS_DIR / "synonyms.tsv")


def default_antonyms() -> SynonymLexicon:
    return load_lexicon(ASSETS_DIR / "antonyms.tsv")
