from rectldg import DIRICHLET, BoundarySpec, EnergyParams


def params(eps, bc=None):
    return EnergyParams(eps, bc or BoundarySpec(DIRICHLET, 0.03, None))


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(k: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if needed."""
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail
