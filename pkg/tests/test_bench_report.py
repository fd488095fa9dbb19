import numpy as np
import pytest

from osmosis import solvers
from osmosis.bench import bench, fit_exponent
from osmosis.errors import ConfigError
from osmosis.grid import Image
from osmosis.io import MetricsRow
from osmosis.report import plot_before_after, plot_metrics, plot_scaling


def test_fit_exponent_recovers_power_law():
    px = np.array([1e3, 4e3, 1.6e4, 6.4e4])
    assert fit_exponent(px, 3e-6 * px**1.0) == pytest.approx(1.0)
    assert fit_exponent(px, 2.0 * px**1.5) == pytest.approx(1.5)
    with pytest.raises(ConfigError):
        fit_exponent([1.0], [1.0])


def test_factorization_happens_once_per_run(monkeypatch):
    calls = []
    original = solvers.factorize_aos

    def counting(d, tau):
        calls.append(d.shape)
        return original(d, tau)

    monkeypatch.setattr(solvers, "factorize_aos", counting)
    rows, steps = bench([32, 48], iters=7)
    # one warm-up call on 8x8, then one per size
    assert calls == [(8, 8), (32, 32), (48, 48)]
    assert [r.factorizations for r in rows] == [1, 1]
    assert len(steps) == 14


def test_rows_are_consistent():
    rows, steps = bench([32], iters=4, schemes=("aos", "implicit", "explicit"))
    for r in rows:
        own = [s.step_ms for s in steps if s.scheme == r.scheme]
        assert r.total_ms == pytest.approx(r.factor_ms + sum(own))
        assert r.mean_step_ms == pytest.approx(np.mean(own))
        assert r.ns_per_pixel_iter == pytest.approx(r.total_ms * 1e6 / (32 * 32 * 4))
    explicit = next(r for r in rows if r.scheme == "explicit")
    assert explicit.tau < 1.0


def test_aos_not_slower_than_krylov():
    rows, _ = bench([96], iters=10, schemes=("aos", "implicit"), tol=1e-8)
    t = {r.scheme: r.total_ms for r in rows}
    assert t["aos"] <= t["implicit"]


def test_invalid_arguments():
    with pytest.raises(ConfigError):
        bench([16])
    with pytest.raises(ConfigError):
        bench([32], iters=0)
    with pytest.raises(ConfigError):
        bench([32], schemes=("rk4",))


def test_figures_written(tmp_path, rng):
    rows = [MetricsRow(s, c, 1.0, 10.0**-s, 0.1) for c in (0, 1) for s in range(1, 6)]
    assert plot_metrics(rows, tmp_path / "m.png").stat().st_size > 0
    brows, _ = bench([32, 40], iters=2)
    assert plot_scaling(brows, tmp_path / "sub" / "s.png").stat().st_size > 0
    a = Image(rng.random((3, 8, 8)))
    assert plot_before_after(a, a, tmp_path / "ba.png").read_bytes()[:4] == b"\x89PNG"
    g = Image(rng.random((8, 8)))
    assert plot_before_after(g, g, tmp_path / "g.png").stat().st_size > 0


@pytest.mark.slow
def test_doubling_side_quadruples_step_time():
    sizes = (256, 512, 1024)
    _, steps = bench(sizes, iters=60)
    med = {s: np.median([t.step_ms for t in steps if t.size == s]) for s in sizes}
    for small, large in zip(sizes, sizes[1:]):
        assert 4 * 0.65 <= med[large] / med[small] <= 4 * 1.35
