"""Exception types shared across the statefuzz package.

Each stage of the pipeline raises a narrow subclass of StateFuzzError so
callers (and the CLI) can report which contract was violated without
string-matching messages.
"""

from __future__ import annotations


class StateFuzzError(Exception):
    """Base class for every error raised by this package."""


# --- fuzz specification / mission parsing -------------------------------

class VocabularyError(StateFuzzError):
    """A mode, state, action, or environment level is not in the vocabulary."""


class ConstraintError(StateFuzzError):
    """The mode/state constraint block references undeclared names."""


class BandError(StateFuzzError):
    """A transition-delay band is malformed (min >= max, negative, duplicate)."""


class GeometryError(StateFuzzError):
    """Mission geometry is unusable (no waypoints, self-intersecting fence)."""


class SequenceError(StateFuzzError):
    """An expected state sequence is inconsistent with the flight plan."""


class ConfigError(StateFuzzError):
    """A system-under-test configuration violates its invariants."""


# --- simulated system under test ----------------------------------------

class IllegalEvent(StateFuzzError):
    """An event was fed to a snapshot that does not define it (harness bug)."""


class UnknownFault(StateFuzzError):
    """A fault id outside the registry was seeded or queried."""


# --- test generation ------------------------------------------------------

class EmptyProduct(StateFuzzError):
    """The constrained combination space is empty; nothing to generate."""


class UnknownAxis(StateFuzzError):
    """A focused-generation axis name is not a fuzzable dimension."""


# --- oracle ---------------------------------------------------------------

class UnknownPredicate(StateFuzzError):
    """A decision-tree node references a predicate that is not registered."""


class MalformedTree(StateFuzzError):
    """A decision-tree document is structurally invalid."""


class MissingDatum(StateFuzzError):
    """A predicate needed a profile field that is absent."""


# --- analysis ---------------------------------------------------------------

class EmptyFailureSet(StateFuzzError):
    """Clustering was requested but no test had a FAILURE verdict."""


class DegenerateK(StateFuzzError):
    """K is out of range for the number of points being clustered."""


# --- truth tables / cut sets ------------------------------------------------

class InvalidOnly(StateFuzzError):
    """Every run behind a truth table came back INVALID; axes are misaimed."""


# --- campaign storage / CLI --------------------------------------------------

class UnknownTestId(StateFuzzError):
    """A replay or lookup referenced a test id missing from the campaign."""
