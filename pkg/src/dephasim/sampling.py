"""Seeded random two-qubit state pairs and categorized backflow scans.

Random numbers come from numpy's PCG64 bit generator.  Pair ``i`` of a run
with seed ``s`` draws from its own stream ``default_rng([s, i])`` (a
SeedSequence built from the pair counter), so results do not depend on the
order or the process in which pairs are evaluated.  Normal variates are
numpy's ziggurat ``standard_normal``; complex Gaussians use independent
real and imaginary parts.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import DensityMatrix4, bell_state
from .measures import blp_pair
from .spectral import DecoherenceTable

CATEGORIES = ("separable", "mixed", "pure_and_mixed", "pure", "maximally_entangled")
DEFAULT_N_PAIRS = 20000


@dataclass
class SeededSampler:
    seed: int
    counter: int = 0
    separable_terms: int = 4

    def next_rng(self) -> np.random.Generator:
        rng = np.random.default_rng([self.seed & 0xFFFFFFFFFFFFFFFF, self.counter])
        self.counter += 1
        return rng


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def haar_ket(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = _complex_normal(rng, dim)
    return v / np.linalg.norm(v)


def haar_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """QR of a Ginibre matrix with the phases of R's diagonal divided out."""
    q, r = np.linalg.qr(_complex_normal(rng, (dim, dim)))
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


def random_pure(rng) -> np.ndarray:
    v = haar_ket(rng, 4)
    return np.outer(v, v.conj())


def random_mixed(rng) -> np.ndarray:
    g = _complex_normal(rng, (4, 4))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_separable(rng, terms: int = 4) -> np.ndarray:
    w = rng.dirichlet(np.ones(terms))
    out = np.zeros((4, 4), dtype=complex)
    for k in range(terms):
        v = np.kron(haar_ket(rng, 2), haar_ket(rng, 2))
        out += w[k] * np.outer(v, v.conj())
    return out


def random_maximally_entangled(rng) -> np.ndarray:
    phi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    v = np.kron(haar_unitary(rng, 2), haar_unitary(rng, 2)) @ phi
    return np.outer(v, v.conj())


def _hermitize(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.conj().T)
    return m / np.trace(m).real


def _draw(cat: str, rng, terms: int) -> tuple[np.ndarray, np.ndarray]:
    if cat == "pure":
        return random_pure(rng), random_pure(rng)
    if cat == "mixed":
        return random_mixed(rng), random_mixed(rng)
    if cat == "pure_and_mixed":
        return random_pure(rng), random_mixed(rng)
    if cat == "separable":
        return random_separable(rng, terms), random_separable(rng, terms)
    if cat == "maximally_entangled":
        return random_maximally_entangled(rng), random_maximally_entangled(rng)
    raise ValueError(f"unknown category {cat!r}; expected one of {CATEGORIES}")


def sample_pair(cat: str, s: SeededSampler) -> tuple[DensityMatrix4, DensityMatrix4]:
    a, b = _draw(cat, s.next_rng(), s.separable_terms)
    return DensityMatrix4(_hermitize(a)), DensityMatrix4(_hermitize(b))


_BELL_PAIRS = (("phi+", "phi-"), ("psi+", "psi-"))


def pair_for_index(seed: int, index: int, terms: int = 4) -> tuple[str, np.ndarray, np.ndarray]:
    """Category and states of pair ``index`` in a round-robin scan.

    The first two maximally entangled draws are the Bell pairs
    (Phi+, Phi-) and (Psi+, Psi-).
    """
    cat = CATEGORIES[index % len(CATEGORIES)]
    k = index // len(CATEGORIES)
    if cat == "maximally_entangled" and k < len(_BELL_PAIRS):
        n1, n2 = _BELL_PAIRS[k]
        return cat, bell_state(n1).data, bell_state(n2).data
    s = SeededSampler(seed, counter=index, separable_terms=terms)
    a, b = _draw(cat, s.next_rng(), terms)
    return cat, _hermitize(a), _hermitize(b)


@dataclass
class SampledScan:
    """Per-pair backflow values and the best pair found."""

    seed: int
    categories: list[str]
    values: np.ndarray
    max_by_category: dict[str, float]
    argmax: int
    argmax_pair: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)

    @property
    def global_max(self) -> float:
        return float(self.values[self.argmax])

    @property
    def argmax_category(self) -> str:
        return self.categories[self.argmax]

    def pair_json(self) -> str:
        r1, r2 = self.argmax_pair
        return json.dumps({
            "index": int(self.argmax),
            "category": self.argmax_category,
            "N": float(self.values[self.argmax]),
            "rho1": {"re": r1.real.tolist(), "im": r1.imag.tolist()},
            "rho2": {"re": r2.real.tolist(), "im": r2.imag.tolist()},
        }, indent=2, sort_keys=True)


def _evaluate_range(args) -> list[float]:
    seed, lo, hi, table, terms, refine = args
    out = []
    for i in range(lo, hi):
        _, a, b = pair_for_index(seed, i, terms)
        out.append(blp_pair(a, b, table, refine=refine)[0])
    return out


def sampled_scan(n_pairs: int, table: DecoherenceTable, s: SeededSampler,
                 jobs: int = 1, refine: bool = False) -> SampledScan:
    """Backflow of ``n_pairs`` round-robin pairs; per-category maxima.

    Pair indices run from ``s.counter``; the sampler is advanced past them.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    start = s.counter
    idx = range(start, start + n_pairs)
    if jobs > 1 and n_pairs > 1:
        n_chunks = min(n_pairs, 4 * jobs)
        bounds = np.linspace(start, start + n_pairs, n_chunks + 1).astype(int)
        tasks = [(s.seed, int(lo), int(hi), table, s.separable_terms, refine)
                 for lo, hi in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            values = np.array([v for chunk in ex.map(_evaluate_range, tasks) for v in chunk])
    else:
        values = np.array(_evaluate_range((s.seed, start, start + n_pairs, table,
                                           s.separable_terms, refine)))
    s.counter = start + n_pairs
    cats = [CATEGORIES[i % len(CATEGORIES)] for i in idx]
    best = {c: 0.0 for c in CATEGORIES}
    for c, v in zip(cats, values):
        best[c] = max(best[c], float(v))
    arg = int(np.argmax(values))
    _, a, b = pair_for_index(s.seed, start + arg, s.separable_terms)
    return SampledScan(s.seed, cats, values, best, arg, (a, b))
