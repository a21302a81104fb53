"""Built-in tasks and their emission templates.

A template source is the program text with placeholders:

    $V<k>   declaration of variable k (name choice over its sub-pool)
    %V<k>   later occurrence of variable k (ref to the declaration)
    $C      comment slot: '#' then a choice over {blank} + comment words
    $D      dead slot: 'sink' then a choice over {blank} + snippet ids, then ';'

Variable k draws its name from the k-th chunk of the first ``id_pool``
identifiers, so names are injective across variables by construction and all
generated names stay inside a rule set's rename pool of the same size.

Two template families share each task's test suite: the full family carries
enough choice points for 5-gram detection experiments; the compact family
keeps receptor counts small enough that the whole equivalent space can be
enumerated exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .minilang import Task, VOCAB
from .model import ChoicePoint, Template


@dataclass(frozen=True)
class GenProfile:
    """Pool sizes shared by generation choices and the attacker's rule set."""

    word_pool: int = 16
    snippet_pool: int = 8
    id_pool: int = 16

    def words(self):
        return VOCAB.word_ids[: self.word_pool]

    def snippets(self):
        return VOCAB.snippet_ids[: self.snippet_pool]

    def identifiers(self):
        return VOCAB.identifier_ids[: self.id_pool]


PROFILE_RICH = GenProfile(word_pool=16, snippet_pool=8, id_pool=16)
PROFILE_COMPACT = GenProfile(word_pool=3, snippet_pool=2, id_pool=4)

_PLACEHOLDER = re.compile(r"^(\$V(\d+)|%V(\d+)|\$C|\$D)$")


def build_template(task_id: str, source: str, profile: GenProfile) -> Template:
    lexemes = source.split()
    n_vars = 1 + max(
        (int(m.group(2) or m.group(3))
         for lx in lexemes if (m := _PLACEHOLDER.match(lx)) and (m.group(2) or m.group(3))),
        default=-1,
    )
    if n_vars > profile.id_pool:
        raise ValueError(f"{task_id}: {n_vars} variables exceed id pool {profile.id_pool}")
    chunk = profile.id_pool // n_vars if n_vars else 1
    ids = profile.identifiers()
    subpool = [tuple(ids[k * chunk:(k + 1) * chunk]) for k in range(n_vars)]
    blank = VOCAB.kw("_")
    word_choice = (blank,) + tuple(profile.words())
    dead_choice = (blank,) + tuple(profile.snippets())

    script = []
    decl_item: dict[int, int] = {}

    def add_choice(allowed):
        pos = len(script)
        w = (1.0 / len(allowed),) * len(allowed)
        script.append(("choice", ChoicePoint(pos, tuple(allowed), w)))
        return pos

    for lx in lexemes:
        m = _PLACEHOLDER.match(lx)
        if not m:
            script.append(("fixed", VOCAB.id_of[lx]))
        elif lx == "$C":
            script.append(("fixed", VOCAB.kw("#")))
            add_choice(word_choice)
        elif lx == "$D":
            script.append(("fixed", VOCAB.kw("sink")))
            add_choice(dead_choice)
            script.append(("fixed", VOCAB.kw(";")))
        elif m.group(2) is not None:
            k = int(m.group(2))
            if k in decl_item:
                raise ValueError(f"{task_id}: $V{k} declared twice")
            decl_item[k] = add_choice(subpool[k])
        else:
            k = int(m.group(3))
            if k not in decl_item:
                raise ValueError(f"{task_id}: %V{k} before its declaration")
            script.append(("ref", decl_item[k]))

    return Template(task_id, script)


# Full-family bodies: at least 12 choice points each, and no 5-token run of
# state-independent tokens, so every scored 5-gram window contains a variable
# occurrence or a slot payload and detector statistics inside an equivalent
# space carry no space-wide constant part.
_FULL_SOURCES = {
    "sum2": """
        fn f ( $V0 , $V1 ) { $C let $V2 = %V0 + %V1 ; $D $C
        let $V3 = %V2 ; $D %V3 = %V3 + %V1 - %V1 ; $C $D
        return %V3 ; $C $D }
    """,
    "max2": """
        fn f ( $V0 , $V1 ) { $C let $V2 = %V0 ; $D
        if ( %V1 > %V0 ) { $C %V2 = %V1 ; $D } $C
        let $V3 = %V2 ; $D return %V3 ; $C $D }
    """,
    "abs1": """
        fn f ( $V0 ) { $C let $V1 = 0 ; $D let $V2 = %V0 ; $C
        if ( %V2 < %V1 ) { $D %V2 = %V1 - %V2 ; $C } $D
        let $V3 = %V2 ; $C return %V3 ; $D }
    """,
    "sumto": """
        fn f ( $V0 ) { $C let $V1 = 0 ; $D let $V2 = 0 ; $C
        while ( %V2 < %V0 ) { $D %V2 = %V2 + 1 ; $C %V1 = %V1 + %V2 ; } $D
        let $V3 = %V1 ; $C return %V3 ; $D }
    """,
    "gcd2": """
        fn f ( $V0 , $V1 ) { $C let $V2 = %V0 ; $D let $V3 = %V1 ; $C
        let $V4 = 0 ; $D while ( %V3 > %V4 ) { %V4 = %V2 % %V3 ; $C
        %V2 = %V3 ; %V3 = %V4 ; $D %V4 = %V2 - %V2 ; } $C return %V2 ; $D }
    """,
    "parity": """
        fn f ( $V0 ) { $C let $V1 = 2 ; $D let $V2 = %V0 % %V1 ; $C
        let $V3 = %V2 ; $D %V3 = %V3 * %V2 ; $C $D
        return %V3 ; $C $D }
    """,
    "clamp3": """
        fn f ( $V0 , $V1 , $V2 ) { $C let $V3 = %V0 ; $D
        if ( %V3 < %V1 ) { $C %V3 = %V1 ; $D } $C
        if ( %V3 > %V2 ) { $D %V3 = %V2 ; $C } $D
        let $V4 = %V3 ; $C return %V4 ; $D }
    """,
    "affine": """
        fn f ( $V0 , $V1 ) { $C let $V2 = %V0 * 2 ; $D
        let $V3 = %V1 * 3 ; $C let $V4 = %V2 + %V3 ; $D
        %V4 = %V4 + 5 ; $C %V4 = %V4 + %V2 - %V2 ; $D return %V4 ; $C }
    """,
}

# Compact-family bodies: at most 3 variables, 2 comment slots and 1 dead slot,
# so the equivalent space stays exactly enumerable under small pools; the
# skeletons are padded with no-op arithmetic to keep ~40 scorable positions.
_COMPACT_SOURCES = {
    "sum2": "fn f ( $V0 , $V1 ) { $C let $V2 = %V0 + %V1 ; "
            "%V2 = %V2 + %V0 - %V0 ; $D %V2 = %V2 + %V1 - %V1 ; $C return %V2 ; }",
    "max2": "fn f ( $V0 , $V1 ) { $C let $V2 = %V0 ; "
            "if ( %V1 > %V2 ) { %V2 = %V1 ; } $D "
            "%V2 = %V2 + %V0 - %V0 ; $C return %V2 ; }",
    "abs1": "fn f ( $V0 ) { $C let $V1 = 0 ; let $V2 = %V0 ; "
            "if ( %V2 < %V1 ) { %V2 = %V1 - %V2 ; } $D "
            "%V2 = %V2 + %V1 ; $C return %V2 ; }",
    "sumto": "fn f ( $V0 ) { $C let $V1 = 0 ; let $V2 = %V1 ; "
             "while ( %V2 < %V0 ) { %V2 = %V2 + 1 ; %V1 = %V1 + %V2 ; } $D "
             "%V1 = %V1 + %V2 - %V2 ; $C return %V1 ; }",
    "gcd2": "fn f ( $V0 , $V1 ) { $C let $V2 = %V1 ; "
            "while ( %V1 > 0 ) { %V2 = %V0 % %V1 ; %V0 = %V1 ; %V1 = %V2 ; } $D "
            "%V0 = %V0 + %V2 - %V2 ; $C return %V0 ; }",
    "parity": "fn f ( $V0 ) { $C let $V1 = 2 ; let $V2 = %V0 % %V1 ; "
              "%V2 = %V2 * %V2 ; $D %V2 = %V2 + %V1 - %V1 ; $C return %V2 ; }",
    "clamp3": "fn f ( $V0 , $V1 , $V2 ) { $C "
              "if ( %V0 < %V1 ) { %V0 = %V1 ; } "
              "if ( %V0 > %V2 ) { %V0 = %V2 ; } $D "
              "%V0 = %V0 + %V1 - %V1 ; $C return %V0 ; }",
    "affine": "fn f ( $V0 , $V1 ) { $C let $V2 = %V0 * 2 + %V1 * 3 ; "
              "%V2 = %V2 + 5 ; $D %V2 = %V2 + %V0 - %V0 ; $C return %V2 ; }",
}

_TEST_CASES = {
    "sum2": (((1, 2), 3), ((5, 7), 12), ((0, 0), 0), ((30, 12), 42)),
    "max2": (((3, 9), 9), ((9, 3), 9), ((4, 4), 4), ((0, 7), 7)),
    "abs1": (((5,), 5), ((-5,), 5), ((0,), 0), ((-31,), 31)),
    "sumto": (((0,), 0), ((1,), 1), ((4,), 10), ((10,), 55)),
    "gcd2": (((12, 18), 6), ((7, 3), 1), ((0, 5), 5), ((48, 36), 12)),
    "parity": (((4,), 0), ((7,), 1), ((0,), 0), ((99,), 1)),
    "clamp3": (((5, 0, 10), 5), ((-3, 0, 10), 0), ((15, 0, 10), 10), ((7, 7, 7), 7)),
    "affine": (((0, 0), 5), ((1, 1), 10), ((10, 2), 31), ((3, 4), 23)),
}

TASK_IDS = tuple(sorted(_TEST_CASES))


def build_task(task_id: str, compact: bool = False) -> Task:
    ref = f"{task_id}:{'compact' if compact else 'full'}"
    return Task(task_id, ref, _TEST_CASES[task_id])


def template_source(task_id: str, compact: bool = False) -> str:
    return (_COMPACT_SOURCES if compact else _FULL_SOURCES)[task_id]


def build_suite(profile: GenProfile = PROFILE_RICH, compact: bool = False,
                task_ids=None):
    """List of (task, template) pairs for the selected family."""
    out = []
    for tid in (task_ids or TASK_IDS):
        task = build_task(tid, compact)
        template = build_template(tid, template_source(tid, compact), profile)
        out.append((task, template))
    return out


def max_fixed_run(template: Template) -> int:
    """Longest run of emission positions whose token never varies.

    Choice positions and refs (variable occurrences) depend on receptor
    state; a run of >= 5 fixed positions would give some scored 5-gram a
    state-independent detector bit.
    """
    longest = run = 0
    for item in template.script:
        if item[0] == "fixed":
            run += 1
            longest = max(longest, run)
        else:
            run = 0
    return longest
