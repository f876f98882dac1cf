import numpy as np
import pytest

from loopcs.ambient import chart_coords, embed, realify, random_unitary
from loopcs.curvature import isometry_defect
from loopcs.errors import ConfigError
from loopcs.zoo import make_berger_s5, make_lens, make_round_sphere, zoo_entry

BERGER = make_berger_s5(0.5)


def test_embedding_round_trip():
    for dim in (3, 5):
        e = make_round_sphere(dim)
        x = e.sample(np.random.default_rng(dim), 50)
        z = embed(x, dim)
        assert np.allclose(np.linalg.norm(z, axis=-1), 1.0)
        assert np.abs(e.chart.wrap(chart_coords(z, dim)) - e.chart.wrap(x)).max() < 1e-12


def test_realify_is_orthogonal():
    U = random_unitary(3, np.random.default_rng(0))
    O = realify(U)
    assert np.abs(O.T @ O - np.eye(6)).max() < 1e-14


def test_registered_isometries():
    x = BERGER.sample(np.random.default_rng(1), 40)
    for name, iso in BERGER.isometries.items():
        assert isometry_defect(BERGER.metric, iso, x).max() < 1e-12, name
    r = make_round_sphere(5)
    assert isometry_defect(r.metric, r.isometries["orthogonal-element"], x).max() < 1e-12
    assert isometry_defect(BERGER.metric, r.isometries["orthogonal-element"], x).max() > 1e-3


@pytest.mark.parametrize("p", [2, 3, 5])
def test_lens_deck_power_is_identity(p):
    lens = make_lens(p, BERGER)
    x = BERGER.sample(np.random.default_rng(p), 30)
    assert lens.deck_power_defect(x) < 1e-12
    assert isometry_defect(BERGER.metric, lens.deck_action, x).max() < 1e-12


def test_lens_fundamental_domain_tiles():
    lens = make_lens(3, BERGER)
    x = BERGER.sample(np.random.default_rng(9), 200)
    hits = np.zeros(len(x), dtype=int)
    y = x
    for _ in range(3):
        hits += lens.in_fundamental_domain(y)
        y = lens.deck_action.eval(y)
    assert np.all(hits == 1)
    with pytest.raises(ValueError):
        lens.fundamental_grid((4, 4, 4, 4, 4))


def test_lens_order_validated():
    with pytest.raises(ValueError):
        make_lens(1, BERGER)


@pytest.mark.parametrize("t", [0.0, -0.5])
def test_berger_rejects_nonpositive_t(t):
    with pytest.raises(ValueError):
        make_berger_s5(t)


def test_entry_lookup():
    assert zoo_entry("berger:t=0.25").name == "berger-t0.25"
    assert zoo_entry("flat:dim=3").dim == 3
    assert zoo_entry("round:dim=3").dim == 3
    for bad in ("hyperbolic", "berger:s=1", "round:dim"):
        with pytest.raises(ConfigError):
            zoo_entry(bad)


def test_samples_stay_off_the_excluded_set():
    x = BERGER.sample(np.random.default_rng(3), 500)
    # polar angles keep a 0.25 margin, so every radius is at least sin(0.25)^2
    assert BERGER.distance_to_excluded(x).min() >= np.sin(0.25) ** 2 - 1e-15
