"""Class labels as mutually orthogonal sinusoidal codewords.

Class ``b`` with ordinal index ``i`` maps to the length-``L`` vector
``sin(2*pi*l/L * (i+1))`` for ``l = 0..L-1``.  Distinct integer frequencies
below ``L/2`` are exactly orthogonal over a full period and share the
squared norm ``L/2``, which makes cosine-similarity classification against
the codebook equivalent to an inner-product argmax for exact codewords.

All types here are immutable after construction and every operation is a
pure function, so values can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionTooSmallError,
    InvalidArgumentError,
)

# tolerance scale for the codebook invariants, relative to the dimension
GRAM_TOL_PER_DIM = 1e-6


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered set of distinct class names; list order assigns ordinals."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise InvalidArgumentError("a taxonomy needs at least 2 classes")
        if any(not isinstance(l, str) or not l for l in labels):
            raise InvalidArgumentError("class labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError("class labels must be unique")

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidArgumentError(f"unknown class label {label!r}") from None


@dataclass(frozen=True)
class TaxonomyCodebook:
    """Codeword matrix for a taxonomy; row ``b`` is the class-``b`` codeword."""

    taxonomy: ClassTaxonomy
    dim: int
    codewords: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.codewords.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.taxonomy.num_classes

    def manifest(self) -> dict:
        """JSON-style export: labels and dimension, plus codeword checksums.

        Codewords are always regenerated from the encoding rule rather than
        persisted as floats; the checksums (sha256 over the float32
        little-endian bytes of each row) let a reader confirm regeneration.
        """
        checksums = [
            hashlib.sha256(
                np.ascontiguousarray(row, dtype="<f4").tobytes()
            ).hexdigest()
            for row in self.codewords
        ]
        return {
            "dim": self.dim,
            "labels": list(self.taxonomy.labels),
            "codeword_sha256": checksums,
        }


def encode_class(index: int, dim: int) -> np.ndarray:
    """Codeword for the class with 0-based ``index`` in a length-``dim`` embedding.

    Element ``l`` is ``sin(2*pi*l/dim * (index+1))``.  Requires
    ``0 <= index``, ``dim >= 4`` and ``index + 1 < dim/2`` so the frequency
    stays below the Nyquist index and orthogonality is exact.
    """
    if index < 0:
        raise InvalidArgumentError(f"violated 0 <= index: index={index}")
    if dim < 4:
        raise InvalidArgumentError(f"violated dim >= 4: dim={dim}")
    if not (index + 1) < dim / 2:
        raise InvalidArgumentError(
            f"violated index + 1 < dim/2: index={index}, dim={dim}"
        )
    l = np.arange(dim, dtype=np.float64)
    return np.sin(2.0 * np.pi * l / dim * (index + 1))


def build_codebook(taxonomy: ClassTaxonomy, dim: int) -> TaxonomyCodebook:
    """Stack the codewords of all classes and verify the codebook invariants."""
    b = taxonomy.num_classes
    if not b < dim / 2:
        raise DimensionTooSmallError(
            f"codebook dimension {dim} too small for {b} classes "
            f"(need num_classes < dim/2)"
        )
    codewords = np.stack([encode_class(i, dim) for i in range(b)])

    tol = GRAM_TOL_PER_DIM * dim
    gram = codewords @ codewords.T
    off = gram - np.diag(np.diag(gram))
    if np.max(np.abs(off)) > tol:
        raise AssertionError("codeword orthogonality invariant violated")
    if np.max(np.abs(np.diag(gram) - dim / 2)) > tol:
        raise AssertionError("codeword norm invariant violated")
    return TaxonomyCodebook(taxonomy=taxonomy, dim=dim, codewords=codewords)


def cosine_scores(estimate: np.ndarray, codebook: TaxonomyCodebook) -> np.ndarray:
    """Cosine similarity of ``estimate`` against every codeword."""
    estimate = np.asarray(estimate, dtype=np.float64)
    if estimate.shape != (codebook.dim,):
        raise InvalidArgumentError(
            f"estimate has shape {estimate.shape}, codebook dim is {codebook.dim}"
        )
    norm = np.linalg.norm(estimate)
    if norm == 0.0:
        raise DegenerateInputError("cannot classify a zero-norm estimate")
    row_norms = np.linalg.norm(codebook.codewords, axis=1)
    return (codebook.codewords @ estimate) / (row_norms * norm)


def classify(
    estimate: np.ndarray, codebook: TaxonomyCodebook
) -> tuple[int, np.ndarray]:
    """Predict the class whose codeword is most cosine-similar to ``estimate``.

    Returns ``(predicted_index, scores)`` with one score per class.  Ties
    break toward the lowest class index, which keeps the result
    deterministic.
    """
    scores = cosine_scores(estimate, codebook)
    return int(np.argmax(scores)), scores


def classify_batch(
    estimates: np.ndarray, codebook: TaxonomyCodebook
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`classify` over rows of ``estimates``."""
    estimates = np.asarray(estimates, dtype=np.float64)
    if estimates.ndim != 2 or estimates.shape[1] != codebook.dim:
        raise InvalidArgumentError(
            f"estimates have shape {estimates.shape}, codebook dim is {codebook.dim}"
        )
    norms = np.linalg.norm(estimates, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot classify a zero-norm estimate")
    row_norms = np.linalg.norm(codebook.codewords, axis=1)
    scores = (estimates @ codebook.codewords.T) / (norms[:, None] * row_norms[None, :])
    return np.argmax(scores, axis=1), scores
