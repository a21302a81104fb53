"""Template-driven stochastic code generator.

The stand-in generative model is an emission script: a fixed-length
interleaving of

* fixed tokens (program structure),
* choice points (a categorical over single tokens: variable names at their
  declaration, comment words, dead-snippet ids), and
* refs (re-emission of the token chosen at an earlier choice point, used for
  every later occurrence of a variable).

Every completion of a script parses and passes its task's test suite; choice
outcomes never affect semantics.  Because all alternatives are single tokens,
the next-token distribution is exactly recoverable from any prefix, and every
completion has the same length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import DistributionError, InvalidPrefixError
from .minilang import Program, parse
from .rng import RngState  # noqa: F401  (re-export: generation owns the stream)


@dataclass(frozen=True)
class Dist:
    """Categorical distribution over token ids."""

    ids: tuple
    probs: tuple

    def is_point(self) -> bool:
        return len(self.ids) == 1

    def validate(self):
        if not self.ids or len(self.ids) != len(self.probs):
            raise DistributionError("ids/probs mismatch")
        if any(p <= 0 for p in self.probs):
            raise DistributionError("weights must be strictly positive")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise DistributionError(f"weights sum to {sum(self.probs)}")
        return self


def point_mass(token: int) -> Dist:
    return Dist((token,), (1.0,))


def uniform(ids) -> Dist:
    ids = tuple(ids)
    return Dist(ids, (1.0 / len(ids),) * len(ids))


def entropy(dist: Dist) -> float:
    """Shannon entropy in nats; 0 * ln 0 = 0."""
    dist.validate()
    return -sum(p * math.log(p) for p in dist.probs if p > 0.0)


@dataclass(frozen=True)
class ChoicePoint:
    position: int
    allowed: tuple
    base_weights: tuple

    def dist(self) -> Dist:
        return Dist(self.allowed, self.base_weights)


class Template:
    """Emission script for one task; immutable after construction."""

    def __init__(self, task_id: str, script):
        self.task_id = task_id
        self.script = tuple(script)
        self.choice_points = []
        profile = []
        for pos, item in enumerate(self.script):
            kind = item[0]
            if kind == "choice":
                cp = item[1]
                cp.dist().validate()
                if cp.position != pos:
                    raise ValueError("choice position out of sync")
                self.choice_points.append(cp)
                profile.append(entropy(cp.dist()))
            elif kind == "ref":
                if not (0 <= item[1] < pos) or self.script[item[1]][0] != "choice":
                    raise ValueError(f"ref at {pos} must point at an earlier choice")
                profile.append(0.0)
            elif kind == "fixed":
                profile.append(0.0)
            else:
                raise ValueError(f"unknown script item {kind!r}")
        self.entropy_profile = tuple(profile)

    @property
    def emission_length(self) -> int:
        return len(self.script)

    def completion_count(self) -> int:
        n = 1
        for cp in self.choice_points:
            n *= len(cp.allowed)
        return n

    def dist_at(self, pos: int, emitted) -> Dist:
        """Next-token distribution at script position ``pos``.

        ``emitted`` must hold the tokens already produced (prefix of length
        >= pos is not required beyond ref targets, which precede pos).
        """
        item = self.script[pos]
        if item[0] == "fixed":
            return point_mass(item[1])
        if item[0] == "ref":
            return point_mass(emitted[item[1]])
        return item[1].dist()

    def max_entropy(self) -> float:
        return max(self.entropy_profile) if self.entropy_profile else 0.0


def base_next_distribution(template: Template, prefix) -> Dist:
    """Distribution of the next emission after a valid partial emission."""
    prefix = tuple(prefix)
    if len(prefix) >= template.emission_length:
        raise InvalidPrefixError("emission already complete")
    for pos, tok in enumerate(prefix):
        item = template.script[pos]
        if item[0] == "fixed":
            if tok != item[1]:
                raise InvalidPrefixError(f"position {pos}: expected fixed token")
        elif item[0] == "ref":
            if tok != prefix[item[1]]:
                raise InvalidPrefixError(f"position {pos}: ref mismatch")
        else:
            if tok not in item[1].allowed:
                raise InvalidPrefixError(f"position {pos}: token not allowed")
    return template.dist_at(len(prefix), prefix)


def generate_tokens(template: Template, rng: RngState) -> list:
    """One unbiased completion of the script."""
    out = []
    for pos in range(template.emission_length):
        dist = template.dist_at(pos, out)
        if dist.is_point():
            out.append(dist.ids[0])
        else:
            out.append(dist.ids[rng.sample_categorical(dist.probs)])
    return out


def generate(template: Template, rng: RngState) -> Program:
    """Sample a program from the base distribution; reproducible from seed."""
    return parse(generate_tokens(template, rng))


# --- persistence --------------------------------------------------------------

def template_to_json(template: Template) -> dict:
    script = []
    for item in template.script:
        if item[0] == "fixed":
            script.append({"fixed": item[1]})
        elif item[0] == "ref":
            script.append({"ref": item[1]})
        else:
            cp = item[1]
            script.append({"choice": {"allowed": list(cp.allowed),
                                      "weights": list(cp.base_weights)}})
    return {"task_id": template.task_id, "script": script}


def template_from_json(obj: dict) -> Template:
    script = []
    for pos, item in enumerate(obj["script"]):
        if "fixed" in item:
            script.append(("fixed", item["fixed"]))
        elif "ref" in item:
            script.append(("ref", item["ref"]))
        elif "choice" in item:
            ch = item["choice"]
            script.append(("choice", ChoicePoint(pos, tuple(ch["allowed"]),
                                                 tuple(ch["weights"]))))
        else:
            raise ValueError(f"bad script item {item}")
    return Template(obj["task_id"], script)


def save_template(template: Template, path):
    with open(path, "w") as fh:
        json.dump(template_to_json(template), fh)


def load_template(path) -> Template:
    with open(path) as fh:
        return template_from_json(json.load(fh))
