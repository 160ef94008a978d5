"""Smoke test for the dynalloc extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import json
import math
import sys

import dynalloc


def main() -> int:
    cfg = dynalloc.Config.satellite("satellite-disturbed")
    assert cfg.n == 10, cfg
    assert dynalloc.Config.from_json(cfg.to_json()).n == cfg.n

    printed = dynalloc.paper_gains("satellite-disturbed")
    report = dynalloc.verify(cfg, printed)
    assert report.passed, str(report)
    print(report, end="")

    traj = dynalloc.simulate(cfg, printed, t_final=5.0)
    assert len(traj) == 501
    assert math.isclose(traj.x[0][0], -0.18)
    assert traj.energy > 0.0
    static = dynalloc.simulate(cfg, printed, t_final=5.0, baseline=True)
    assert len(static.x[0]) == 4

    result = dynalloc.synthesize(cfg, mode="nominal")
    assert result.status in ("optimal", "feasible"), result
    assert result.worst_residual >= -1e-7
    assert len(result.p) == 1 and len(result.p[0]) == cfg.n
    assert json.loads(result.to_json())["mode"] == "nominal"
    certified = dynalloc.verify(cfg, result)
    assert certified.passed, str(certified)
    print(result)

    try:
        dynalloc.synthesize(cfg, mode="global")
    except ValueError as err:
        assert "stable plant" in str(err), err
    else:
        raise AssertionError("global mode accepted an unstable plant")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
