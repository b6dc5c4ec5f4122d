"""Hierarchical outcome groupings and the fused-pair set.

A grouping is an ordered list of levels; each level is a list of outcome
index sets whose union covers all outcomes.  The outermost level is the
single all-outcomes group and the innermost level is the per-outcome
singletons, so joint selection, group-wise selection and per-outcome
selection all coexist.  Pairs of outcomes to be fused default to all
within-group pairs of the most refined user-supplied level.

All outcome indices in this module are 0-based; the plain-text group file
format is 1-based and converted on parsing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OutcomeGrouping:
    """Validated outcome grouping with deduplicated groups and fuse pairs.

    Attributes
    ----------
    n_outcomes : int
        Number of outcomes K.
    levels : tuple of tuples of sorted int tuples
        The grouping levels as constructed (after any auto-insertion).
    groups : tuple of sorted int tuples
        Deduplicated groups in canonical order: levels scanned in order,
        groups within each level in their given order, each distinct set
        kept at its first occurrence.
    multiplicity : tuple of int
        Number of times each deduplicated group occurs across levels;
        penalty weights of coincident groups are merged by summation.
    fuse_pairs : tuple of (int, int)
        Unordered outcome pairs (l, o) with l < o, each exactly once.
    """

    n_outcomes: int
    levels: tuple
    groups: tuple
    multiplicity: tuple
    fuse_pairs: tuple

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_pairs(self) -> int:
        return len(self.fuse_pairs)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups], dtype=np.int64)

    def membership_matrix(self) -> np.ndarray:
        """Boolean (n_groups, K) matrix; entry (g, k) marks k in group g."""
        M = np.zeros((self.n_groups, self.n_outcomes), dtype=bool)
        for gi, g in enumerate(self.groups):
            M[gi, list(g)] = True
        return M

    def groups_containing(self, k: int) -> list:
        return [gi for gi, g in enumerate(self.groups) if k in g]

    @staticmethod
    def explicit(n_outcomes, groups, fuse_pairs=()):
        """Build a grouping from an explicit group list with no auto-insertion.

        Intended for degenerate or hand-rolled configurations (for example a
        singletons-only grouping for fitting outcomes independently).  The
        given groups form a single level; identical sets are merged with
        their multiplicity recorded.
        """
        level = [_check_group(g, n_outcomes) for g in groups]
        _check_cover([level], n_outcomes)
        dedup, mult = _dedup([level])
        pairs = _check_pairs(fuse_pairs, n_outcomes)
        return OutcomeGrouping(n_outcomes, (tuple(level),), dedup, mult, pairs)


def build_grouping(n_outcomes, user_levels=None, fuse_pairs=None) -> OutcomeGrouping:
    """Assemble the full hierarchy around optional user-supplied levels.

    The all-outcomes group is prepended and the singleton level appended
    (each skipped if the user already supplied an identical level at that
    position).  The fused-pair set defaults to all within-group pairs of the
    last user level, or the empty set when no user level is given; an
    explicit ``fuse_pairs`` overrides the default entirely.

    Parameters
    ----------
    n_outcomes : int
        Number of outcomes K (>= 1).
    user_levels : sequence of levels, optional
        Each level is a sequence of outcome index collections (0-based).
    fuse_pairs : iterable of (l, o), optional
        Explicit unordered pair set overriding the default.
    """
    if n_outcomes < 1:
        raise ValueError("n_outcomes must be >= 1")
    all_set = tuple(range(n_outcomes))
    levels = []
    user_levels = [list(lv) for lv in (user_levels or [])]
    for lv in user_levels:
        level = [_check_group(g, n_outcomes) for g in lv]
        levels.append(tuple(level))
    _check_cover(levels, n_outcomes)

    full = [(all_set,)] + levels + [tuple((k,) for k in range(n_outcomes))]
    dedup, mult = _dedup(full)

    if fuse_pairs is not None:
        pairs = _check_pairs(fuse_pairs, n_outcomes)
    elif levels:
        seen = []
        for g in levels[-1]:
            for a in range(len(g)):
                for b in range(a + 1, len(g)):
                    pr = (g[a], g[b]) if g[a] < g[b] else (g[b], g[a])
                    if pr not in seen:
                        seen.append(pr)
        pairs = tuple(seen)
    else:
        pairs = ()
    return OutcomeGrouping(n_outcomes, tuple(full), dedup, mult, pairs)


def singleton_grouping(n_outcomes) -> OutcomeGrouping:
    """Singletons-only grouping with no fuse pairs.

    This is the degenerate configuration under which the model decouples
    into independent per-outcome lasso problems.
    """
    return OutcomeGrouping.explicit(
        n_outcomes, [(k,) for k in range(n_outcomes)], ())


def parse_group_file(source, n_outcomes):
    """Parse the plain-text group specification format.

    One line per group: ``level:<m> outcomes:<comma-separated 1-based
    indices>`` with m >= 1 (the all-outcomes level and the singleton level
    are inserted automatically and must not appear).  Optional ``fuse: l,o``
    lines (1-based) override the default pair set.  Blank lines and ``#``
    comments are ignored.

    Returns ``(user_levels, fuse_pairs_or_None)`` with 0-based indices,
    ready for :func:`build_grouping`.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    elif isinstance(source, str) and "\n" not in source:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = str(source).splitlines()

    by_level = {}
    pairs = []
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("fuse:"):
            body = line.split(":", 1)[1]
            parts = [s.strip() for s in body.split(",")]
            if len(parts) != 2:
                raise ValueError(f"line {ln}: fuse lines need exactly two indices")
            l, o = (_parse_index(s, ln) for s in parts)
            pairs.append((l, o))
            continue
        tokens = line.split()
        fields = {}
        for tok in tokens:
            if ":" not in tok:
                raise ValueError(f"line {ln}: expected key:value tokens, got {tok!r}")
            key, val = tok.split(":", 1)
            fields[key.strip().lower()] = val.strip()
        if "level" not in fields or "outcomes" not in fields:
            raise ValueError(f"line {ln}: group lines need level: and outcomes:")
        try:
            level_no = int(fields["level"])
        except ValueError:
            raise ValueError(f"line {ln}: level must be an integer") from None
        if level_no < 1:
            raise ValueError(
                f"line {ln}: level {level_no} is reserved (levels 0 and the "
                "singleton level are inserted automatically)")
        members = tuple(_parse_index(s, ln) for s in fields["outcomes"].split(","))
        by_level.setdefault(level_no, []).append(members)

    if by_level:
        expected = list(range(1, max(by_level) + 1))
        missing = [m for m in expected if m not in by_level]
        if missing:
            raise ValueError(f"group file skips level(s) {missing}")
    user_levels = [by_level[m] for m in sorted(by_level)]
    fuse = [(min(l, o), max(l, o)) for l, o in pairs] if pairs else None
    if fuse is not None:
        for l, o in fuse:
            if not (0 <= l < n_outcomes and 0 <= o < n_outcomes) or l == o:
                raise ValueError(f"fuse pair ({l + 1},{o + 1}) out of range or degenerate")
    return user_levels, fuse


def _parse_index(s, ln):
    try:
        v = int(s)
    except ValueError:
        raise ValueError(f"line {ln}: expected an integer index, got {s!r}") from None
    if v < 1:
        raise ValueError(f"line {ln}: outcome indices are 1-based, got {v}")
    return v - 1


def _check_group(g, n_outcomes):
    members = tuple(sorted(set(int(k) for k in g)))
    if not members:
        raise ValueError("empty group")
    if members[0] < 0 or members[-1] >= n_outcomes:
        raise ValueError(
            f"group {tuple(k + 1 for k in members)} references an outcome "
            f"outside 1..{n_outcomes}")
    return members


def _check_cover(levels, n_outcomes):
    universe = set(range(n_outcomes))
    for li, level in enumerate(levels):
        got = set()
        for g in level:
            got.update(g)
        if got != universe:
            missing = sorted(universe - got)
            raise ValueError(
                f"level {li + 1} does not cover outcome(s) "
                f"{[k + 1 for k in missing]}")


def _check_pairs(fuse_pairs, n_outcomes):
    out = []
    for l, o in fuse_pairs:
        l, o = int(l), int(o)
        if l == o:
            raise ValueError(f"degenerate fuse pair ({l}, {o})")
        if not (0 <= l < n_outcomes and 0 <= o < n_outcomes):
            raise ValueError(f"fuse pair ({l}, {o}) outside 0..{n_outcomes - 1}")
        pr = (l, o) if l < o else (o, l)
        if pr not in out:
            out.append(pr)
    return tuple(out)


def _dedup(levels):
    dedup, mult = [], []
    for level in levels:
        for g in level:
            g = tuple(g)
            if g in dedup:
                mult[dedup.index(g)] += 1
            else:
                dedup.append(g)
                mult.append(1)
    return tuple(dedup), tuple(mult)
