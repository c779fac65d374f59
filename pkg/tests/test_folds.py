import pytest

from poslearn.folds import (
    export_fold_plan_csv,
    make_forward_plan,
    make_rocv,
    make_rwcv,
)


class TestRocv:
    def test_expanding_origin(self):
        plan = make_rocv(13, 10)
        got = [(list(f.train), f.validate) for f in plan.folds]
        assert got == [
            (list(range(1, 11)), 11),
            (list(range(1, 12)), 12),
            (list(range(1, 13)), 13),
        ]

    def test_minimal(self):
        plan = make_rocv(11, 10)
        assert len(plan.folds) == 1
        assert plan.folds[0].validate == 11

    def test_nothing_to_validate(self):
        with pytest.raises(ValueError, match="nothing to validate"):
            make_rocv(10, 10)

    def test_nesting(self):
        plan = make_rocv(30, 5)
        for a, b in zip(plan.folds, plan.folds[1:]):
            assert set(a.train) < set(b.train)


class TestRwcv:
    def test_sliding_window(self):
        plan = make_rwcv(13, 10)
        got = [(list(f.train), f.validate) for f in plan.folds]
        assert got == [
            (list(range(1, 11)), 11),
            (list(range(2, 12)), 12),
            (list(range(3, 13)), 13),
        ]

    def test_window_one(self):
        plan = make_rwcv(3, 1)
        assert [(list(f.train), f.validate) for f in plan.folds] == [
            ([1], 2),
            ([2], 3),
        ]

    def test_nothing_to_validate(self):
        with pytest.raises(ValueError, match="nothing to validate"):
            make_rwcv(10, 10)

    def test_constant_cardinality(self):
        plan = make_rwcv(40, 7)
        assert all(len(f.train) == 7 for f in plan.folds)


class TestForward:
    def test_predictions_from_twelfth(self):
        plan = make_forward_plan(14)
        got = [(list(f.train), f.validate) for f in plan.folds]
        assert got == [
            (list(range(1, 12)), 12),
            (list(range(1, 13)), 13),
            (list(range(1, 14)), 14),
        ]

    def test_minimal(self):
        plan = make_forward_plan(12)
        assert [(f.train[-1], f.validate) for f in plan.folds] == [(11, 12)]

    def test_too_short(self):
        with pytest.raises(ValueError, match="series too short"):
            make_forward_plan(11)


class TestInvariants:
    """Exhaustive fold-plan algebra on small T; the acceptance suite extends
    this to T in 2..200."""

    def test_leakage_and_coverage(self):
        for T in range(2, 40):
            for s in range(1, T):
                plan = make_rocv(T, s)
                assert plan.validation_sessions == tuple(range(s + 1, T + 1))
                for fold in plan.folds:
                    assert max(fold.train) < fold.validate
            for w in range(1, T):
                plan = make_rwcv(T, w)
                for fold in plan.folds:
                    assert len(fold.train) == w
                    assert max(fold.train) < fold.validate
            for f in range(2, T + 1):
                plan = make_forward_plan(T, f)
                assert plan.validation_sessions == tuple(range(f, T + 1))

    def test_no_session_validated_twice(self):
        plan = make_rocv(50, 3)
        sessions = plan.validation_sessions
        assert len(set(sessions)) == len(sessions)


def test_export_csv(tmp_path):
    plan = make_rocv(12, 10)
    path = tmp_path / "plan.csv"
    export_fold_plan_csv(plan, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "fold,role,session_index"
    assert lines[1] == "1,train,1"
    assert lines[11] == "1,validate,11"
