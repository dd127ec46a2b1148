import numpy as np
import pytest

from sfclab.substrate import DataCenter, Link, SubstrateNetwork
from sfclab.traffic import SfcRequest, Vnf


def make_request(demands, src=0, dst=0, sla=4.0, t_arr=0.0, lifetime=100.0,
                 vlink_bw=None):
    demands = list(demands)
    if vlink_bw is None:
        vlink_bw = [0.01] * (len(demands) + 1)
    return SfcRequest(vnfs=[Vnf(d) for d in demands], vlink_bw=vlink_bw,
                      t_arr=t_arr, t_delta=lifetime, l_sla=sla, src=src, dst=dst)


def make_net(residuals_per_dc, links=None, capacity=1.0):
    """Build a substrate from explicit per-node free capacity lists.

    Residuals are snapped onto the exact-arithmetic grid, as generation would.
    """
    from sfclab.substrate import quantize_cpu

    dcs = []
    for i, residuals in enumerate(residuals_per_dc):
        residuals = quantize_cpu(np.asarray(residuals, dtype=np.float64))
        cap = np.full(residuals.shape, capacity)
        dcs.append(DataCenter(i, cap, cap - residuals))
    m = len(dcs)
    if links is None:
        links = [Link(a, b, 1.0) for a in range(m) for b in range(a + 1, m)]
    return SubstrateNetwork(dcs, links)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
