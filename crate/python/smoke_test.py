"""Smoke test for the pyddctl extension module.

Build and install first, e.g. `pip install ./crates/python` or
`maturin develop -m crates/python/Cargo.toml`, then run this file.
"""

import math
import tempfile

import pyddctl


def main():
    eye = [[1.0, 0.0], [0.0, 1.0]]
    assert pyddctl.expm([[0.0, 0.0], [0.0, 0.0]]) == eye
    p = pyddctl.pseudo_inverse([[2.0, 0.0], [0.0, 4.0], [0.0, 0.0]])
    assert abs(p[0][0] - 0.5) < 1e-14 and abs(p[1][1] - 0.25) < 1e-14
    assert abs(pyddctl.spectral_radius([[0.0, -0.9], [0.9, 0.0]]) - 0.9) < 1e-12

    design = pyddctl.Design(pyddctl.Config(seed=0))
    assert len(design) == 5
    assert design.feasible
    for cert in design.certificates():
        assert cert["lambda_max"] <= -cert["epsilon_margin"]
        assert cert["lambda_min_s"] > 0.0
    assert design.closed_loop_radius() < 1.0
    a_star, b_star = design.reconstruct(0)
    assert len(a_star) == 2 and len(b_star[0]) == 1

    trace = design.simulate(v_r=50.0, duration=10.0)
    assert len(trace["times"]) == 1001
    assert trace["settling_time"] is not None and trace["settling_time"] <= 6.0
    assert all(math.isfinite(v) for v in trace["lyapunov"])

    with tempfile.TemporaryDirectory() as out:
        code, report = pyddctl.pipeline(pyddctl.Config(out=out))
        assert code == 0, report

    try:
        pyddctl.Design(pyddctl.Config(samples=5))
    except pyddctl.DdctlError as e:
        assert "rank condition" in str(e)
    else:
        raise AssertionError("short record was accepted")

    print("pyddctl smoke test passed")


if __name__ == "__main__":
    main()
