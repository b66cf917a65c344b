"""Smoke test for the wavereg Python module.

Build and install first:  maturin develop -m crates/py/pyproject.toml
"""

import math
import os
import random
import tempfile

import wavereg


def main():
    rng = random.Random(0)
    dims = (8, 8, 8)
    n = dims[0] * dims[1] * dims[2]
    vol = wavereg.Volume(dims, [rng.random() for _ in range(n)])

    for kind in ("haar", "db2"):
        bands = wavereg.dwt3(vol, kind)
        assert sorted(bands) == sorted(["lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh"]), sorted(bands)
        back = wavereg.idwt3(bands, (4, 4, 4), kind)
        err = max(abs(a - b) for a, b in zip(back.data(), vol.data()))
        assert err < 1e-10, (kind, err)

    pair = wavereg.synth_pair("gaussian_bumps", (16, 16, 16), 2.0, seed=3, labels=True)
    assert wavereg.neg_jac_fraction(pair["gt_flow"]) == 0.0
    flow, pyramid, info = wavereg.register(pair["moving"], pair["fixed"], stages=(20, 20, 20), diff=True)
    assert info["neg_jac_percent"] == 0.0
    assert len(info["loss_history"]) == 60
    assert pyramid.num_params() == len(pyramid.to_flat())
    assert math.isfinite(flow.endpoint_error(pair["target_flow"]))

    warped = wavereg.warp_nearest(pair["moving_labels"], flow)
    assert set(warped.data()) <= set(pair["moving_labels"].data())
    scores = wavereg.dice(warped, pair["fixed_labels"], [1, 2])
    assert all(0.0 <= s <= 1.0 for s in scores.values())

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "flow.raw")
        wavereg.write_field(path, flow)
        back = wavereg.read_field(path).channels()
        for a, b in zip(back, flow.channels()):
            # payload is f32
            assert max(abs(x - y) for x, y in zip(a, b)) <= 1e-6 * max(1.0, flow.max_magnitude())

    try:
        wavereg.Volume(dims, [0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("bad length accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
