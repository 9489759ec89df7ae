import numpy as np

from linres.esn import ESNConfig, generate_dense


def rel_err(a, b) -> float:
    """max|a - b| / max|b| (absolute when b is zero)."""
    a, b = np.asarray(a), np.asarray(b)
    scale = np.max(np.abs(b)) if b.size else 0.0
    diff = np.max(np.abs(a - b)) if a.size else 0.0
    return float(diff / scale) if scale > 0 else float(diff)


def dense(N=20, seed=0, **kw):
    return generate_dense(ESNConfig(units=N, seed=seed, **kw))


# Acceptance details by criterion number, printed by the terminal summary hook.
ACCEPTANCE = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record one acceptance result and fail the calling test if ``ok`` is false."""
    ACCEPTANCE[criterion] = detail
    assert ok, f"criterion {criterion}: {detail}"
