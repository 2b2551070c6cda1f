"""Seeded logic mutants for sensitivity testing.

Production code consults ``active(name)`` at three decision points; tests
flip individual mutants on to confirm the suites detect each fault.  All
mutants are off unless explicitly enabled.

Known mutants:
  ro_req_consumes     read-only requires consume matched cells like plain ones
  entens_drop_frame   the ens entailment discards its residual frame
  entreq_covariant    the req entailment checks the covariant direction
"""

from __future__ import annotations

from contextlib import contextmanager

KNOWN = ("ro_req_consumes", "entens_drop_frame", "entreq_covariant")

_active: set[str] = set()


def active(name: str) -> bool:
    return name in _active


@contextmanager
def enabled(name: str):
    if name not in KNOWN:
        raise ValueError(f"unknown mutant {name}")
    _active.add(name)
    try:
        yield
    finally:
        _active.discard(name)
