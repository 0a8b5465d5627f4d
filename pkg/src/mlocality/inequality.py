"""Construction and serialization of the hierarchy of multipartite Bell-type inequalities.

The family is indexed by the party count ``n``, a locality parameter ``m``
(``2 <= m <= n``) and a distinguished party ``k'``.  Each expression is a
signed sum of joint probability terms ``P(outcomes|settings)`` over two
settings (``a``, ``b``) and two outcomes (``0``, ``1``) per party:

* one positive term ``+P(0...0|a...a)``,
* ``n`` negative terms with a single ``b`` setting and all outcomes ``0``,
* ``binomial(n-1, m-1)`` negative terms with ``b`` settings on ``k'`` plus an
  ``(m-1)``-subset of the remaining parties, outcome ``1`` exactly there.

A nonnegative upper bound of zero holds for every nonsignaling m-local
hidden-variable model; a positive value therefore witnesses nonlocality at
depth ``m``.  ``m = 2`` tests genuine multipartite nonlocality, ``m = n``
is the Hardy-type test for standard multipartite nonlocality.

Party indices are 1-based in every public interface.  Settings/outcomes
strings are ordered by party, position ``k`` holding party ``k + 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

SETTING_A = "a"
SETTING_B = "b"
SETTINGS = (SETTING_A, SETTING_B)
OUTCOMES = ("0", "1")


class ParameterDomainError(ValueError):
    """Parameters (n, m, k') outside the valid domain, or a size guard hit."""


class DimensionMismatchError(ValueError):
    """Objects with incompatible party counts were combined."""


def _check_domain(n: int, m: int, k_prime: int | None = None) -> None:
    if n < 2:
        raise ParameterDomainError(f"need at least 2 parties, got n={n}")
    if not 2 <= m <= n:
        raise ParameterDomainError(f"locality parameter must satisfy 2 <= m <= n, got m={m}, n={n}")
    if k_prime is not None and not 1 <= k_prime <= n:
        raise ParameterDomainError(f"k_prime must lie in 1..{n}, got {k_prime}")


@dataclass(frozen=True)
class Term:
    """One signed probability term ``coefficient * P(outcomes|settings)``."""

    coefficient: int
    settings: str
    outcomes: str

    def __post_init__(self) -> None:
        if self.coefficient not in (+1, -1):
            raise ValueError(f"coefficient must be +1 or -1, got {self.coefficient}")
        if len(self.settings) != len(self.outcomes):
            raise ValueError("settings and outcomes must have equal length")
        if len(self.settings) < 2:
            raise ValueError("terms need at least 2 parties")
        if any(c not in SETTINGS for c in self.settings):
            raise ValueError(f"settings may only contain {SETTINGS}, got {self.settings!r}")
        if any(c not in OUTCOMES for c in self.outcomes):
            raise ValueError(f"outcomes may only contain {OUTCOMES}, got {self.outcomes!r}")

    @property
    def n(self) -> int:
        return len(self.settings)

    def b_parties(self) -> tuple[int, ...]:
        """1-based parties measured with setting ``b`` in this term."""
        return tuple(k + 1 for k, c in enumerate(self.settings) if c == SETTING_B)

    def __str__(self) -> str:
        sign = "+" if self.coefficient > 0 else "-"
        return f"{sign}P({self.outcomes}|{self.settings})"


@dataclass(frozen=True)
class BellExpression:
    """A complete inequality expression; ``sum(term) <= 0`` is the claimed bound."""

    n: int
    m: int
    k_prime: int
    terms: tuple[Term, ...]

    def __post_init__(self) -> None:
        _check_domain(self.n, self.m, self.k_prime)
        object.__setattr__(self, "terms", tuple(self.terms))
        if any(t.n != self.n for t in self.terms):
            raise DimensionMismatchError("every term must cover all n parties")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("duplicate terms in expression")
        if len(self.terms) != term_count(self.n, self.m):
            raise ValueError(
                f"expected {term_count(self.n, self.m)} terms for (n={self.n}, m={self.m}), "
                f"got {len(self.terms)}"
            )

        all_zero = "0" * self.n
        positive = [t for t in self.terms if t.coefficient == +1]
        if positive != [Term(+1, SETTING_A * self.n, all_zero)]:
            raise ValueError("expression must contain exactly one +P(0...0|a...a) term")

        single_b = [t for t in self.terms if t.coefficient == -1 and len(t.b_parties()) == 1]
        if sorted(t.b_parties()[0] for t in single_b) != list(range(1, self.n + 1)) or any(
            t.outcomes != all_zero for t in single_b
        ):
            raise ValueError("expression must contain one all-zero single-b term per party")

        rest = [t for t in self.terms if t not in positive and t not in single_b]
        subsets = set()
        for t in rest:
            b_set = set(t.b_parties())
            if self.k_prime not in b_set or len(b_set) != self.m:
                raise ValueError(f"unexpected b-setting pattern in term {t}")
            expected = "".join("1" if k + 1 in b_set else "0" for k in range(self.n))
            if t.outcomes != expected:
                raise ValueError(f"outcomes of term {t} do not mark its b-set")
            subsets.add(frozenset(b_set - {self.k_prime}))
        if len(subsets) != math.comb(self.n - 1, self.m - 1):
            raise ValueError("second-sum terms must enumerate all (m-1)-subsets exactly once")

    def __len__(self) -> int:
        return len(self.terms)

    def coefficient_sum(self) -> int:
        return sum(t.coefficient for t in self.terms)


def term_count(n: int, m: int) -> int:
    """Number of terms in the (n, m) expression: 1 + n + binomial(n-1, m-1)."""
    _check_domain(n, m)
    return 1 + n + math.comb(n - 1, m - 1)


def build_hierarchy_inequality(n: int, m: int, k_prime: int = 1) -> BellExpression:
    """Construct the inequality for ``n`` parties at locality depth ``m``.

    Term order is fixed: the positive term, then single-``b`` terms by party,
    then the second-sum terms in lexicographic order of their subset of
    ``I \\ {k'}``.  The order is part of the serialization contract.
    """
    _check_domain(n, m, k_prime)
    all_zero = "0" * n
    terms = [Term(+1, SETTING_A * n, all_zero)]
    for k in range(1, n + 1):
        settings = "".join(SETTING_B if j == k else SETTING_A for j in range(1, n + 1))
        terms.append(Term(-1, settings, all_zero))
    others = [k for k in range(1, n + 1) if k != k_prime]
    for subset in combinations(others, m - 1):
        b_set = {k_prime, *subset}
        settings = "".join(SETTING_B if j in b_set else SETTING_A for j in range(1, n + 1))
        outcomes = "".join("1" if j in b_set else "0" for j in range(1, n + 1))
        terms.append(Term(-1, settings, outcomes))
    return BellExpression(n=n, m=m, k_prime=k_prime, terms=tuple(terms))


def serialize_expression(expr: BellExpression, format: str = "structured") -> bytes:
    """Serialize to UTF-8 bytes, either ``structured`` (JSON) or ``text``."""
    if format == "structured":
        doc = {
            "n": expr.n,
            "m": expr.m,
            "k_prime": expr.k_prime,
            "terms": [
                {"coefficient": t.coefficient, "settings": t.settings, "outcomes": t.outcomes}
                for t in expr.terms
            ],
        }
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    if format in ("text", "human-text"):
        lines = [f"# Bell-type inequality: n={expr.n}, m={expr.m}, k'={expr.k_prime}"]
        lines.extend(str(t) for t in expr.terms)
        lines.append("<= 0")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown format {format!r}; expected 'structured' or 'text'")


def parse_expression(data: bytes | str) -> BellExpression:
    """Inverse of ``serialize_expression(..., 'structured')``."""
    if isinstance(data, bytes):
        data = data.decode()
    doc = json.loads(data)
    terms = tuple(
        Term(coefficient=int(t["coefficient"]), settings=t["settings"], outcomes=t["outcomes"])
        for t in doc["terms"]
    )
    return BellExpression(n=int(doc["n"]), m=int(doc["m"]), k_prime=int(doc["k_prime"]), terms=terms)
