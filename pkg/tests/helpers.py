import numpy as np

from offdiag.fields import fd_partial


def fd(fn, point, alpha):
    """Finite-difference oracle with a step suited to the derivative degree."""
    h = {1: 1e-4, 2: 1e-3}.get(sum(alpha), 1e-2)
    return fd_partial(fn, np.asarray(point, dtype=float), alpha, h=h)


def reports_match(got, want, atol=1e-12, rtol=1e-6) -> list[str]:
    """Differences between two CLI reports; numeric residuals compared with a tolerance."""
    diffs = []
    for key in sorted(set(got) | set(want)):
        if key in ("checks", "wall_time_s"):
            continue
        if got.get(key) != want.get(key):
            diffs.append(f"{key}: {got.get(key)!r} != {want.get(key)!r}")
    g_checks = {c["name"]: c for c in got.get("checks", [])}
    w_checks = {c["name"]: c for c in want.get("checks", [])}
    if list(g_checks) != list(w_checks):
        return diffs + [f"checks: {list(g_checks)} != {list(w_checks)}"]
    for name, w in w_checks.items():
        g = g_checks[name]
        for field in sorted(set(g) | set(w)):
            a, b = g.get(field), w.get(field)
            if field in ("max_residual", "mean_residual") and a is not None and b is not None:
                if abs(a - b) > max(atol, rtol * abs(b)):
                    diffs.append(f"{name}.{field}: {a} != {b}")
            elif a != b:
                diffs.append(f"{name}.{field}: {a!r} != {b!r}")
    return diffs
