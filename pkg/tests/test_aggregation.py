from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convagg.aggregation import (
    AggregationConfig,
    aggregate_democratic,
    aggregate_pool,
    democratic_weights,
)
from convagg.errors import ConfigError, DataError
from convagg.linalg import l2_normalize_rows


def sigma_dispersion(rows: np.ndarray, lam: np.ndarray) -> float:
    gram = np.maximum(rows @ rows.T, 0.0)
    sigma = lam * (gram @ lam)
    return float(sigma.max() / sigma.min())


class TestPooling:
    def test_sum(self):
        assert aggregate_pool(np.array([[1.0, 0.0], [0.0, 1.0]]), "sum").tolist() == [1.0, 1.0]

    def test_avg(self):
        assert aggregate_pool(np.array([[1.0, 0.0], [0.0, 1.0]]), "avg").tolist() == [0.5, 0.5]

    def test_max(self):
        assert aggregate_pool(np.array([[1.0, -2.0], [0.0, 3.0]]), "max").tolist() == [1.0, 3.0]

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            aggregate_pool(np.zeros((0, 3)), "sum")


class TestDemocraticWeights:
    def test_orthonormal_rows_fixed_at_one(self):
        lam = democratic_weights(np.eye(4))
        assert lam.tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_duplicate_rows_closed_form(self):
        row = np.array([1.0, 0.0])
        lam = democratic_weights(np.stack([row, row]), AggregationConfig(sinkhorn_iterations=1))
        assert np.allclose(lam, 1.0 / np.sqrt(2.0), atol=1e-12)
        lam10 = democratic_weights(np.stack([row, row]))
        assert np.allclose(lam10, 1.0 / np.sqrt(2.0), atol=1e-9)  # fixed point

    def test_dispersion_strictly_decreases(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            rows = l2_normalize_rows(np.abs(rng.standard_normal((16, 8))))
            lam = democratic_weights(rows)
            after = sigma_dispersion(rows, lam)
            before = sigma_dispersion(rows, np.ones(16))
            assert after < before

    def test_weights_positive(self):
        rng = np.random.default_rng(1)
        rows = l2_normalize_rows(rng.standard_normal((30, 6)))
        lam = democratic_weights(rows)
        assert (lam > 0).all()

    def test_non_unit_rows_rejected(self):
        with pytest.raises(DataError):
            democratic_weights(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_single_row_is_one(self):
        assert democratic_weights(np.array([[1.0, 0.0]])).tolist() == [1.0]


class TestDemocraticAggregate:
    def test_orthonormal_equals_sum_pooling_exactly(self):
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        # exact orthonormality only holds for identity-like rows
        rows = np.eye(6)
        assert np.array_equal(aggregate_democratic(rows), aggregate_pool(rows, "sum"))
        del q

    def test_duplicate_rows_sqrt2(self):
        row = np.array([0.6, 0.8])
        out = aggregate_democratic(np.stack([row, row]))
        assert np.allclose(out, np.sqrt(2.0) * row, atol=1e-9)

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(3)
        rows = l2_normalize_rows(rng.standard_normal((24, 10)))
        out = aggregate_democratic(rows)
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(24)
            assert np.array_equal(aggregate_democratic(rows[perm]), out)


class TestConfig:
    def test_invalid_iterations(self):
        with pytest.raises(ConfigError):
            AggregationConfig(sinkhorn_iterations=0)

    def test_invalid_exponent(self):
        with pytest.raises(ConfigError):
            AggregationConfig(sinkhorn_exponent=0.0)
        with pytest.raises(ConfigError):
            AggregationConfig(sinkhorn_exponent=1.5)

    def test_invalid_mode(self):
        with pytest.raises(ConfigError):
            AggregationConfig(mode="median")


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 20), d=st.integers(2, 12), seed=st.integers(0, 2**31))
def test_democratic_output_permutation_invariant_property(n, d, seed):
    rng = np.random.default_rng(seed)
    rows = l2_normalize_rows(rng.standard_normal((n, d)))
    out = aggregate_democratic(rows)
    perm = rng.permutation(n)
    assert np.array_equal(aggregate_democratic(rows[perm]), out)


def test_sigma_never_vanishes_with_clamping():
    rng = np.random.default_rng(4)
    rows = l2_normalize_rows(rng.standard_normal((12, 5)))
    cfg = AggregationConfig()
    lam = democratic_weights(rows, cfg)
    gram = np.maximum(rows @ rows.T, 0.0)
    sigma = lam * (gram @ lam)
    assert (sigma >= lam**2 * gram.diagonal().min() - 1e-12).all()
    assert (sigma > 0).all()
