import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcate.data import Dataset, make_folds, validate_dataset
from vcate.errors import (
    InvalidK,
    NonBinaryTreatment,
    NonFiniteValue,
    OverlapViolation,
    TooFewUnits,
)


def small_dataset(n=20, p=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        y=rng.normal(size=n),
        d=(rng.random(n) < 0.5).astype(float),
        x=rng.normal(size=(n, p)),
        pscore=np.full(n, 0.5),
    )


class TestMakeFolds:
    def test_partition_property(self):
        plan = make_folds(4, 2, seed=7)
        assert sorted(plan.assignment.tolist()).count(0) == 2
        assert set(plan.assignment) == {0, 1}

    def test_cluster_coherence(self):
        cluster_id = np.array([1, 1, 2, 2, 3, 3, 4, 4])
        plan = make_folds(8, 2, seed=3, cluster_id=cluster_id)
        for c in np.unique(cluster_id):
            folds = np.unique(plan.assignment[cluster_id == c])
            assert folds.size == 1

    def test_determinism(self):
        a = make_folds(2500, 2, seed=99)
        b = make_folds(2500, 2, seed=99)
        assert np.array_equal(a.assignment, b.assignment)
        c = make_folds(2500, 2, seed=100)
        assert not np.array_equal(a.assignment, c.assignment)

    def test_split_id_changes_assignment(self):
        a = make_folds(100, 2, seed=5, split_id=0)
        b = make_folds(100, 2, seed=5, split_id=1)
        assert not np.array_equal(a.assignment, b.assignment)

    @given(
        n=st.integers(min_value=10, max_value=300),
        K=st.integers(min_value=2, max_value=5),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=40, deadline=None)
    def test_fold_sizes_balanced(self, n, K, seed):
        if n < 2 * K:
            return
        plan = make_folds(n, K, seed)
        sizes = plan.fold_sizes()
        assert sizes.sum() == n
        assert sizes.max() - sizes.min() <= 1

    def test_errors(self):
        with pytest.raises(InvalidK):
            make_folds(10, 1, seed=0)
        with pytest.raises(TooFewUnits):
            make_folds(3, 2, seed=0)
        with pytest.raises(TooFewUnits):
            make_folds(100, 3, seed=0, cluster_id=np.repeat([1, 2, 3, 4, 5], 20))


class TestValidateDataset:
    def test_valid_passes(self):
        validate_dataset(small_dataset(), 0.01)

    def test_overlap_violation_names_index(self):
        ds = small_dataset()
        pscore = ds.pscore.copy()
        pscore[7] = 0.001
        bad = Dataset(y=ds.y, d=ds.d, x=ds.x, pscore=pscore)
        with pytest.raises(OverlapViolation, match="7"):
            validate_dataset(bad, 0.01)

    def test_non_binary_treatment(self):
        ds = small_dataset()
        d = ds.d.copy()
        d[3] = 2.0
        bad = Dataset(y=ds.y, d=d, x=ds.x, pscore=ds.pscore)
        with pytest.raises(NonBinaryTreatment, match="3"):
            validate_dataset(bad, 0.01)

    def test_non_finite(self):
        ds = small_dataset()
        x = ds.x.copy()
        x[5, 1] = np.nan
        bad = Dataset(y=ds.y, d=ds.d, x=x, pscore=ds.pscore)
        with pytest.raises(NonFiniteValue, match="x"):
            validate_dataset(bad, 0.01)
