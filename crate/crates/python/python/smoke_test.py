"""Smoke test for the beaconfp extension module.

Build and install first, e.g. `maturin develop` or
`pip install target/wheels/beaconfp-*.whl`, then run this file.
"""

import math
import os
import tempfile

import beaconfp


def main():
    assert beaconfp.SIGMA_GRID == [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]

    f, o = [-60.0, -70.0], [-65.0, -65.0]
    assert abs(beaconfp.similarity("cosine", f, o) - 0.9970544855015815) < 1e-12
    assert beaconfp.similarity("kernel", f, f, sigma=4.0) == 1.0
    assert abs(beaconfp.similarity("kernel", [0.0], [5.0], sigma=5.0) - math.exp(-0.5)) < 1e-12
    try:
        beaconfp.similarity("bogus", f, o)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown metric accepted")

    with tempfile.TemporaryDirectory() as tmp:
        survey = os.path.join(tmp, "survey.csv")
        test = os.path.join(tmp, "test.csv")
        assert beaconfp.synth(survey, seed=1) > 0
        beaconfp.synth(test, seed=2, dwell=2.0)

        db = beaconfp.Database.build(survey, td=30.0)
        assert len(db) == 35 and db.n_beacons == 16, repr(db)
        sets = db.select(10)
        assert len(sets) == 35 and all(len(b) == 10 for b in sets.values())

        path = os.path.join(tmp, "db.json")
        db.save(path)
        db = beaconfp.Database.load(path)

        obs = beaconfp.consolidate(test, protocol=2)
        assert len(obs) == 70
        coords = {label: (x, y) for label, x, y in db.grid_points()}
        for values, truth in obs:
            (x, y), neighbors = db.estimate(values, metric="kernel", k=1, selection=True)
            assert len(neighbors) == 1
            assert (x, y) == coords[truth], (truth, x, y)

        top = db.top_k(db.fingerprint("3_2"), metric="cosine", k=3)
        assert top[0] == ("3_2", 1.0), top
        (x, y), neighbors = db.estimate(db.fingerprint("3_2"), k=4, weights="similarity")
        assert abs(sum(w for _, _, w in neighbors) - 1.0) < 1e-12

    print("beaconfp smoke test passed")


if __name__ == "__main__":
    main()
