import pytest
from hypothesis import given, strategies as st

from clusterrev.baseline import (
    DistributionModel,
    GlobalCrl,
    crl_distribution_time,
    crl_lookup,
    crl_revoke,
    crl_revoke_all,
    padding_ids,
)
from clusterrev.revocation import Lccl, lccl_size_bytes, scan_cost


def test_revoke():
    crl = crl_revoke(GlobalCrl(), "V25")
    assert crl.entries == ("V25",) and crl.version == 1
    assert crl_revoke(crl, "V25") == crl


def test_example_workload_entry_count():
    crl = crl_revoke_all(GlobalCrl(), ["V25", "V8", "V5"])
    assert len(crl.entries) == 3


def test_lookup_costs():
    big = crl_revoke_all(GlobalCrl(), padding_ids(25000))
    assert crl_lookup(big, "V1") == (False, 25000)
    assert crl_lookup(GlobalCrl(), "V1") == (False, 0)
    assert crl_lookup(big, "CRL-000000") == (True, 1)
    assert big.size_bytes == 2_500_000


def test_distribution_times():
    model = DistributionModel()
    big = GlobalCrl(tuple(padding_ids(25000)))
    assert crl_distribution_time(big, model) == pytest.approx(625.0)
    assert model.time_for(1016) == pytest.approx(0.254)
    assert crl_distribution_time(GlobalCrl(), DistributionModel(4000, 1.5)) == 1.5


def test_model_validation():
    with pytest.raises(ValueError):
        DistributionModel(0)
    with pytest.raises(ValueError):
        DistributionModel(10, -1)


@given(st.lists(st.sampled_from([f"V{i}" for i in range(40)])))
def test_batch_revoke_matches_single_steps(certs):
    one_by_one = GlobalCrl()
    for c in certs:
        one_by_one = crl_revoke(one_by_one, c)
    assert crl_revoke_all(GlobalCrl(), certs) == one_by_one


@given(st.integers(0, 5000), st.integers(1, 100), st.floats(1, 1e6))
def test_distribution_time_strictly_increasing(n, extra, bandwidth):
    model = DistributionModel(bandwidth)
    smaller = GlobalCrl(tuple(padding_ids(n)))
    larger = GlobalCrl(tuple(padding_ids(n + extra)))
    assert crl_distribution_time(larger, model) > crl_distribution_time(smaller, model)


@given(st.lists(st.sampled_from([f"V{i}" for i in range(30)]), unique=True, min_size=1), st.integers(0, 2000))
def test_lccl_miss_never_costs_more_than_crl_miss(local, padding):
    crl = crl_revoke_all(GlobalCrl(), padding_ids(padding) + local)
    lccl = Lccl(1, tuple(local))
    miss_lccl = scan_cost(lccl.entries, "NOT-LISTED")[1]
    miss_crl = crl_lookup(crl, "NOT-LISTED")[1]
    assert miss_lccl <= miss_crl
    assert miss_crl / miss_lccl >= len(crl.entries) / len(lccl.entries)
    assert lccl_size_bytes(lccl, 100, 0) <= crl.size_bytes
