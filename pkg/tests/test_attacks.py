import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdiag import model as mlp
from fracdiag.attacks import (
    AttackKind,
    AttackSpec,
    PgdConfig,
    apply_attack,
    apply_bias,
    apply_noise,
    apply_replacement,
    apply_replay,
    difficulty,
    pgd_attack,
)
from fracdiag.signalgen import GridConfig, HierLabel, Window, generate_window, nominal_magnitudes, normal_archive

GRID = GridConfig()
QUIET = GridConfig(meas_noise=0.0, load_jitter=0.0)
NOM = nominal_magnitudes(GRID)


@pytest.fixture(scope="module")
def fault_window():
    return generate_window(GRID, HierLabel(2, 3), 99)


def _changed_columns(a: Window, b: Window) -> np.ndarray:
    return np.flatnonzero(np.any(a.data != b.data, axis=0))


def test_difficulty_map():
    assert [difficulty(k) for k in AttackKind] == [0.0, 0.2, 0.4, 0.7, 1.0]
    assert AttackKind.parse("replay") is AttackKind.REPLAY
    with pytest.raises(ValueError):
        AttackKind.parse("dos")


def test_bias_on_quiet_normal_window():
    w = generate_window(QUIET, HierLabel(0), 0)
    spec = AttackSpec(AttackKind.BIAS)
    hit = apply_bias(w, NOM, spec)
    assert np.allclose(hit.p, 1.10, atol=1e-15)
    twice = apply_bias(hit, NOM, spec)
    assert np.allclose(twice.data - w.data, 0.20 * NOM[:, None], atol=1e-15)
    same = apply_bias(w, NOM, AttackSpec(AttackKind.BIAS, bias_frac=0.0))
    assert np.array_equal(same.data, w.data)


def test_noise_monte_carlo_std():
    n = 1_000_000
    w = Window(np.zeros((3, n)), GRID.dt, HierLabel(0), 5)
    hit = apply_noise(w, NOM, AttackSpec(AttackKind.NOISE, seed=3))
    assert abs(np.std(hit.p) - 0.05) < 0.001
    assert abs(np.std(hit.q) - 0.05 * 0.3) < 0.001 * 0.3


def test_noise_determinism_and_identity(fault_window):
    spec = AttackSpec(AttackKind.NOISE, seed=8)
    a = apply_noise(fault_window, NOM, spec)
    b = apply_noise(fault_window, NOM, spec)
    assert a.data.tobytes() == b.data.tobytes()
    zero = apply_noise(fault_window, NOM, AttackSpec(AttackKind.NOISE, noise_frac=0.0))
    assert np.array_equal(zero.data, fault_window.data)
    other = apply_noise(fault_window, NOM, AttackSpec(AttackKind.NOISE, seed=9))
    assert not np.array_equal(a.data, other.data)


def test_replacement_counts_and_values(fault_window):
    spec = AttackSpec(AttackKind.REPLACEMENT, seed=1)
    hit = apply_replacement(fault_window, spec)
    cols = _changed_columns(fault_window, hit)
    # noisy data: every overwritten sample differs from its stale copy
    assert cols.size == 80
    assert cols.min() >= 50
    assert np.array_equal(hit.data[:, cols], fault_window.data[:, cols - 50])


def test_replacement_edge_cases(fault_window):
    const = Window(np.full((3, 400), 0.7), GRID.dt, HierLabel(1, 1), 0)
    assert np.array_equal(apply_replacement(const, AttackSpec(AttackKind.REPLACEMENT)).data, const.data)
    none = apply_replacement(fault_window, AttackSpec(AttackKind.REPLACEMENT, repl_frac=0.0))
    assert np.array_equal(none.data, fault_window.data)
    with pytest.raises(ValueError):
        apply_replacement(fault_window, AttackSpec(AttackKind.REPLACEMENT, stale_lag=400))


def test_replay_segment(fault_window):
    archive = normal_archive(GRID, 4, 17)
    hit = apply_replay(fault_window, archive, AttackSpec(AttackKind.REPLAY, seed=2))
    cols = _changed_columns(fault_window, hit)
    assert cols.size == 200
    assert np.all(np.diff(cols) == 1)
    seg = slice(cols[0], cols[-1] + 1)
    assert any(np.array_equal(hit.data[:, seg], a.data[:, seg]) for a in archive)


def test_replay_edge_cases(fault_window):
    archive = normal_archive(GRID, 1, 3)
    full = apply_replay(fault_window, archive, AttackSpec(AttackKind.REPLAY, replay_frac=1.0))
    assert np.array_equal(full.data, archive[0].data)
    assert full.label == fault_window.label
    none = apply_replay(fault_window, archive, AttackSpec(AttackKind.REPLAY, replay_frac=0.0))
    assert np.array_equal(none.data, fault_window.data)
    with pytest.raises(ValueError):
        apply_replay(fault_window, [], AttackSpec(AttackKind.REPLAY))


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(list(AttackKind)), seed=st.integers(0, 2**63 - 1))
def test_injectors_preserve_window_shape_and_label(kind, seed):
    w = generate_window(GRID, HierLabel(4, 6), seed % 1000)
    spec = AttackSpec(kind, seed=seed)
    archive = normal_archive(GRID, 2, 0)
    a = apply_attack(w, spec, NOM, archive)
    b = apply_attack(w, spec, NOM, archive)
    assert a.data.shape == w.data.shape and a.dt == w.dt and a.label == w.label
    assert a.data.tobytes() == b.data.tobytes()


def test_attack_spec_json_and_invariants():
    spec = AttackSpec(AttackKind.REPLAY, replay_frac=0.25, seed=4)
    assert AttackSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ValueError):
        AttackSpec(noise_frac=1.5)
    with pytest.raises(ValueError):
        AttackSpec(stale_lag=0)


def _net(seed=0):
    return mlp.init_params((36, 64, 32, 5), seed)


def test_pgd_identity_at_zero_radius():
    x = np.random.default_rng(0).normal(size=36)
    cfg = PgdConfig(epsilon=0.0, step_size=0.0)
    out = pgd_attack(lambda a, y: mlp.input_gradient(_net(), a, y), x, 2, cfg)
    assert np.array_equal(out, x)


def test_pgd_stays_in_ball_batch():
    p = _net(1)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 36))
    y = rng.integers(0, 5, size=200)
    out = pgd_attack(lambda a, t: mlp.input_gradient(p, a, t), X, y, PgdConfig(), rng)
    assert np.max(np.abs(out - X)) <= 0.1 + 1e-12


def test_pgd_single_step_ascends_from_start():
    p = _net(3)
    cfg = PgdConfig(steps=1)
    ups = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(1, 36))
        y = np.array([seed % 5])
        start = x + np.random.default_rng(seed).uniform(-0.1, 0.1, size=x.shape)
        adv = pgd_attack(lambda a, t: mlp.input_gradient(p, a, t), x, y, cfg, np.random.default_rng(seed))
        ups.append(mlp.per_sample_loss(p, adv, y)[0] >= mlp.per_sample_loss(p, start, y)[0])
    assert all(ups)


def test_pgd_rejects_bad_gradient_and_config():
    with pytest.raises(FloatingPointError):
        pgd_attack(lambda a, y: np.full_like(a, np.nan), np.zeros(36), 0, PgdConfig())
    with pytest.raises(ValueError):
        PgdConfig(step_size=0.2)
    with pytest.raises(ValueError):
        PgdConfig(steps=0)
