import math
import os
import tempfile
import unittest

import numpy as np

from evolution_service import EvolveConfig, bump, evolve
from export_service import (
    CHECK_HEADER,
    check_rows,
    load_states,
    save_states,
    snapshot_indices,
    to_jsonable,
)
from lab_errors import InvalidArgument
from radial_core import make_grid
from report_store import ReportStore


class ReportStoreTests(unittest.TestCase):
    def test_json_is_written_atomically_and_read_back(self):
        with tempfile.TemporaryDirectory() as tmp:
            store = ReportStore(tmp)
            path = store.write_json("profiles", "report.json", {"b": 1, "a": [1.5, None]})
            self.assertEqual(path, os.path.join(tmp, "profiles", "report.json"))
            self.assertEqual(os.listdir(os.path.join(tmp, "profiles")), ["report.json"])
            self.assertEqual(store.read_json("profiles", "report.json"), {"a": [1.5, None], "b": 1})
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            self.assertLess(text.index('"a"'), text.index('"b"'))

    def test_missing_or_broken_json_gives_default(self):
        with tempfile.TemporaryDirectory() as tmp:
            store = ReportStore(tmp)
            self.assertIsNone(store.read_json("x", "report.json"))
            os.makedirs(os.path.join(tmp, "x"))
            with open(os.path.join(tmp, "x", "report.json"), "w", encoding="utf-8") as fh:
                fh.write("{incompleto")
            self.assertEqual(store.read_json("x", "report.json", default={}), {})

    def test_csv_cells(self):
        with tempfile.TemporaryDirectory() as tmp:
            store = ReportStore(tmp)
            path = store.write_csv("", "t.csv", ("t", "v", "ok"), [{"t": 0.1, "v": None, "ok": True}, {"t": 2, "v": 1e-20}])
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        self.assertEqual(lines, ["t,v,ok", "0.1,,True", "2,1e-20,"])

    def test_target_creates_the_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = ReportStore(tmp).target("evolve", "states.npz")
            self.assertTrue(os.path.isdir(os.path.join(tmp, "evolve")))
            self.assertFalse(os.path.exists(path))


class ExportTests(unittest.TestCase):
    def test_to_jsonable(self):
        payload = to_jsonable({1: np.float64(0.5), "x": np.array([1, 2]), "nan": math.inf, "flag": np.bool_(True)})
        self.assertEqual(payload, {"1": 0.5, "x": [1, 2], "nan": None, "flag": True})
        self.assertIsInstance(payload["x"][0], int)

    def test_snapshot_indices(self):
        self.assertEqual(snapshot_indices(10, 4), [0, 3, 6, 9])
        self.assertEqual(snapshot_indices(3, 5), [0, 1, 2])
        self.assertEqual(snapshot_indices(0, 4), [])

    def test_check_rows(self):
        rows = check_rows([{"name": "x", "target": 1.0, "measured": 1.0, "tolerance": None, "pass": True, "detail": "d"}])
        self.assertEqual(tuple(rows[0]), CHECK_HEADER)
        self.assertNotIn("detail", rows[0])

    def test_saved_states_rebuild_the_grid(self):
        grid = make_grid(4.0, 128)
        traj = evolve(bump(grid, 0.1, 1.0, 4), EvolveConfig(t_end=0.2, record_every=10), 4)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "states.npz")
            save_states(path, traj, {"t0": 7.5})
            k, samples, meta = load_states(path)
        self.assertEqual(k, 4)
        self.assertEqual(meta, {"t0": 7.5})
        self.assertEqual(len(samples), len(traj.times))
        t, state = samples[-1]
        self.assertEqual(t, traj.times[-1])
        self.assertTrue(np.array_equal(state.grid.nodes, grid.nodes))
        self.assertTrue(np.array_equal(state.u.values, traj.final.u.values))

    def test_thinned_trajectories_cannot_be_saved(self):
        grid = make_grid(4.0, 128)
        traj = evolve(bump(grid, 0.1, 1.0, 4), EvolveConfig(t_end=0.2, record_every=10, keep_states=False), 4)
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(InvalidArgument):
                save_states(os.path.join(tmp, "states.npz"), traj)


if __name__ == "__main__":
    unittest.main()
