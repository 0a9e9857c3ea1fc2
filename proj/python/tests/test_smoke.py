import json
import math
import tempfile

import numpy as np
import pytest

import hamlearn


def test_import_and_version():
    assert hamlearn.__version__


def test_plain_sgd_step():
    theta, buf = hamlearn.sgd_momentum_step(
        np.array([0.0]), np.array([-1.0]), gamma=0.01
    )
    assert theta[0] == pytest.approx(0.01, abs=1e-15)
    assert buf[0] == -1.0


def test_momentum_buffer_conventions():
    g = np.array([1.0])
    _, mainstream = hamlearn.sgd_momentum_step(np.zeros(1), g, gamma=0.01, mu=0.05, rho=0.6)
    _, dampened = hamlearn.sgd_momentum_step(
        np.zeros(1), g, gamma=0.01, mu=0.05, rho=0.6, dampened_first=True
    )
    assert mainstream[0] == 1.0
    assert dampened[0] == pytest.approx(0.4, abs=1e-15)


def test_parameter_map_roundtrip():
    mapped = hamlearn.map_params(gamma=0.01, mu=0.0, rho=0.0, tau=1.0)
    assert mapped == {"beta": 0.01, "eta": 1.0, "phi": 1.0, "tau": 1.0}
    back = hamlearn.unmap_params(**mapped)
    assert back == {"gamma": 0.01, "mu": 0.0, "rho": 0.0}


def test_psi_map_is_a_reflection():
    assert hamlearn.psi_map(11.0, 10.0, 1.0) == 7.0
    with pytest.raises(hamlearn.HamlearnError):
        hamlearn.psi_map(9.0, 10.0, 1.0)


def test_reverse_replay_palindrome():
    tokens = [np.array([float(k)]) for k in range(4)]
    items = hamlearn.reverse_replay(tokens, spacing=0.5)
    values = [float(u[0]) for u, _, _ in items]
    assert values == [0, 1, 2, 3, 2, 1, 0]
    assert items[-1][2] is True
    stamps = [t for _, t, _ in items]
    assert stamps == sorted(stamps)


def test_replay_gradient_matches_bptt():
    rng = np.random.default_rng(12)
    hidden, dim, length = 4, 2, 6
    theta = hamlearn.init_rnn(dim, hidden, seed=3)
    tokens = [rng.uniform(-1, 1, dim) for _ in range(length)]
    targets = [None] * (length - 1) + [rng.uniform(-1, 1, hidden)]

    omega, oracle_gap, loss = hamlearn.hl_bptt_replay(tokens, targets, theta, hidden, tau=1.0)
    assert oracle_gap <= 1e-10
    grad, ref_loss = hamlearn.bptt_gradients(tokens, targets, np.zeros(hidden), theta, hidden)
    np.testing.assert_allclose(omega, grad, rtol=0, atol=1e-12)
    assert loss == pytest.approx(ref_loss, abs=1e-12)


def test_midpoint_roundtrip_is_tiny():
    assert hamlearn.midpoint_roundtrip_error(depth=100, hidden=4, tau=0.5) <= 1e-10


def test_quick_experiment_passes():
    with tempfile.TemporaryDirectory() as tmp:
        config = {
            "name": "pysmoke",
            "scenario": "GD-a",
            "mode": "ff_output",
            "model": {"kind": "linear"},
            "dataset": {"name": "iris_synth"},
            "epochs": 1,
            "seed": 3,
            "output_dir": tmp,
        }
        summary = hamlearn.run_experiment(json.dumps(config))
        assert summary["pass"] is True
        assert summary["steps"] == 150
        assert summary["max_step_weight_diff"] <= 1e-9
        report = hamlearn.compare_curves(
            f"{tmp}/pysmoke_hl.csv", f"{tmp}/pysmoke_oracle.csv", 1e-9
        )
        assert report["pass"] is True
        assert math.isfinite(report["max_gap"])
