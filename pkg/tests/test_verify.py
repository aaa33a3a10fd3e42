import math

import numpy as np
import pytest

from replaylab import verify, weighting


def wrong_sign_apx(scheme, t):
    ages = np.asarray(t, dtype=float)
    log_ratio = math.log(scheme.c_min) - math.log(scheme.N0) - scheme.L0 * math.log(scheme.eta)
    first = 1.0 / np.maximum(np.maximum(ages, scheme.c_min), scheme.recent_floor) - 1.0 / scheme.N0
    bonus = max(-log_ratio, 0.0) / scheme.c_min
    return first + np.where(ages <= scheme.c_min, bonus, 0.0)


def test_ere_oracle_passes():
    assert verify.suite_ere_oracle().passed


def test_ere_oracle_catches_wrong_log_sign(monkeypatch):
    monkeypatch.setattr(weighting, "ere_apx_weight", wrong_sign_apx)
    res = verify.suite_ere_oracle()
    assert not res.passed
    failing = [c.name for c in res.checks if not c.ok]
    assert any("eta=0.99" in name and "apx" in name for name in failing)


def test_filtering_runs_only_requested():
    res = verify.run_suites(["flow-lemma"], seed=1)
    assert [r.name for r in res] == ["flow-lemma"]
    assert res[0].passed


def test_unknown_suite():
    with pytest.raises(KeyError):
        verify.run_suites(["nope"])


@pytest.mark.parametrize("name", sorted(verify.SUITES))
def test_each_suite_passes(name):
    (res,) = verify.run_suites([name], seed=3)
    assert res.passed, [(c.name, c.value, c.limit) for c in res.checks]


def test_check_directions():
    assert verify.Check("a", 1.0, 2.0).ok
    assert not verify.Check("a", 1.0, 2.0, ">=").ok
