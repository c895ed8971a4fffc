"""Semantic toggles and search limits."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

KEY_SCHEMES = ("symmetric", "asymmetric", "split")
_SCHEME_ALIASES = {"sym": "symmetric", "asym": "asymmetric", "symmetric-only": "symmetric",
                   "asymmetric-only": "asymmetric"}


class BoundsError(ValueError):
    pass


def key_scheme(name: str) -> str:
    name = _SCHEME_ALIASES.get(name, name)
    if name not in KEY_SCHEMES:
        raise ValueError(f"unknown key scheme {name!r}")
    return name


@dataclass(frozen=True)
class SemanticsConfig:
    typed: bool = True
    dh_theory: bool = False
    key_scheme: str = "split"
    sig_reveals_payload: bool = True
    # only consulted by the per-basic-sequence invariant checker
    precedence_rule: bool = False

    def __post_init__(self):
        object.__setattr__(self, "key_scheme", key_scheme(self.key_scheme))

    def with_(self, **changes) -> "SemanticsConfig":
        return replace(self, **changes)

    def as_dict(self) -> Dict[str, object]:
        return {
            "typed": self.typed,
            "dh_theory": self.dh_theory,
            "key_scheme": self.key_scheme,
            "sig_reveals_payload": self.sig_reveals_payload,
            "precedence_rule": self.precedence_rule,
        }


@dataclass(frozen=True)
class Bounds:
    max_threads_per_role: int = 2
    max_run_length: int = 14
    max_intruder_depth: int = 4
    # per-role thread limits overriding max_threads_per_role; 0 disables a role
    role_threads: Tuple[Tuple[str, int], ...] = field(default=())

    def __post_init__(self):
        for name in ("max_threads_per_role", "max_run_length", "max_intruder_depth"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise BoundsError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.role_threads, dict):
            object.__setattr__(self, "role_threads", tuple(sorted(self.role_threads.items())))
        for role, n in self.role_threads:
            if n < 0:
                raise BoundsError(f"thread limit for {role} must be >= 0")

    def threads_for(self, role: str) -> int:
        for name, n in self.role_threads:
            if name == role:
                return n
        return self.max_threads_per_role

    def with_(self, **changes) -> "Bounds":
        return replace(self, **changes)

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "max_threads_per_role": self.max_threads_per_role,
            "max_run_length": self.max_run_length,
            "max_intruder_depth": self.max_intruder_depth,
        }
        if self.role_threads:
            out["role_threads"] = dict(self.role_threads)
        return out
