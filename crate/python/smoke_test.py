"""Smoke test for the cellfree extension module.

Build and install it first, e.g.

    pip install --no-build-isolation -e crates/python
"""

import math
import tempfile

import cellfree


def main():
    cfg = cellfree.Config.desk()
    cfg.n_layouts = 1
    cfg.n_fading = 5
    print(cfg)
    assert cfg.num_rrh == 4 and cfg.antennas_per_rrh == 8
    assert len(cellfree.scheme_names()) == 8

    layout = cellfree.generate_layout(cfg, 0)
    assert len(layout.beta) == cfg.num_ue
    assert layout.snr > 0
    for k, cluster in enumerate(layout.clusters):
        assert len(cluster) <= 10
        if cluster:
            assert layout.pilots[k] is not None

    reports = layout.ergodic_rates(cfg, ["gzf-duality", "lzf-ppa"])
    for r in reports:
        print(r)
        assert all(x >= 0 for x in r.dl_rate)
    assert reports[0].ul_rate is not None and reports[1].ul_rate is None

    theta = [[1.2, 0.3, 0.05], [0.1, 0.8, 0.2], [0.4, 0.02, 2.0]]
    gamma = cellfree.nominal_ul_sinr(theta, 3.0)
    q, feasible = cellfree.duality_power_allocation(theta, gamma, 3.0)
    assert feasible
    assert math.isclose(sum(q), 3.0, rel_tol=1e-9)
    dl = cellfree.nominal_dl_sinr(theta, q, 3.0)
    assert all(math.isclose(a, b, rel_tol=1e-8) for a, b in zip(dl, gamma))

    assert math.isclose(cellfree.torus_distance((1.0, 1.0), (224.0, 1.0), 225.0), 2.0)
    assert math.isclose(cellfree.spectral_efficiency(1.0, cellfree.Config()), 0.8)

    try:
        cellfree.Config.from_toml("[scenario]\npilot_dim = 0\n")
    except ValueError as e:
        assert "scenario.pilot_dim" in str(e)
    else:
        raise AssertionError("invalid config accepted")

    with tempfile.TemporaryDirectory() as out:
        ids = cellfree.run_experiment(cfg.to_toml(), out)
        assert len(ids) == 1

    print("smoke test passed")


if __name__ == "__main__":
    main()
