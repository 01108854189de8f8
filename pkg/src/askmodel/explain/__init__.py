"""Explanation operations: attribution, perturbation, similarity, rationales."""
from .attribution import (
    Attribution,
    globaltopk,
    integrated_gradients,
    nlpattribute,
    verbalize_attribution,
)
from .lexicon import (
    SynonymLexicon,
    default_antonyms,
    default_synonyms,
    load_lexicon,
    load_stopwords,
)
from .perturb import (
    AlreadyMisclassified,
    AttackFailed,
    EditedText,
    NoFlipFound,
    adversarial,
    apply_edits,
    augment,
    nlpcfe,
)
from .rationale import Rationale, build_prompt, builtin_rationale, rationalize
from .similarity import SimilarityIndex, keywords

__all__ = [
    "Attribution",
    "globaltopk",
    "integrated_gradients",
    "nlpattribute",
    "verbalize_attribution",
    "SynonymLexicon",
    "default_antonyms",
    "default_synonyms",
    "load_lexicon",
    "load_stopwords",
    "AlreadyMisclassified",
    "AttackFailed",
    "EditedText",
    "NoFlipFound",
    "adversarial",
    "apply_edits",
    "augment",
    "nlpcfe",
    "Rationale",
    "build_prompt",
    "builtin_rationale",
    "rationalize",
    "SimilarityIndex",
    "keywords",
]
