"""Global geometric tolerance.

Lilypond grains touch at exact equality, so every contact and ordering
comparison in the package goes through the helpers below.
"""

EPS_GEO = 1e-9


def set_eps(value: float) -> None:
    """Override the global tolerance (used by the CLI ``eps`` key)."""
    global EPS_GEO
    if not value > 0:
        raise ValueError(f"tolerance must be positive, got {value!r}")
    EPS_GEO = float(value)


def tol(scale: float = 0.0) -> float:
    """Absolute slack for a comparison between quantities of size ``scale``."""
    return EPS_GEO * (1.0 + abs(scale))


def leq(a: float, b: float) -> bool:
    """``a <= b`` up to the geometric tolerance."""
    return a <= b + tol(b)


def close(a: float, b: float) -> bool:
    return abs(a - b) <= tol(max(abs(a), abs(b)))
