import importlib.util
import json
import tempfile
import unittest
from pathlib import Path

from support import ROOT


def _load_tool(name):
    spec = importlib.util.spec_from_file_location(name, Path(ROOT) / "tools" / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class CompareReportsTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tool = _load_tool("compare_reports")

    def test_equal_tables(self):
        table = {"a": {"name": "a", "measured": 1.0, "pass": True}}
        self.assertEqual(self.tool.compare(table, dict(table)), [])

    def test_differences(self):
        left = {"a": {"measured": 1.0, "pass": True}, "b": {"measured": None, "pass": True}}
        right = {"a": {"measured": 1.001, "pass": False}}
        diffs = self.tool.compare(left, right)
        self.assertEqual(len(diffs), 3)
        self.assertTrue(diffs[0].startswith("a: pass"))
        self.assertEqual(self.tool.compare(left, {"a": {"measured": 1.001, "pass": True}, "b": left["b"]}, rtol=1e-2), [])

    def test_load_reads_checks(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.json"
            path.write_text(json.dumps({"checks": [{"name": "x", "measured": 2.0, "pass": True}]}), encoding="utf-8")
            self.assertEqual(set(self.tool._load(path)), {"x"})
            with self.assertRaises(SystemExit):
                self.tool._load(Path(tmp) / "falta.json")


class DumpDefaultsTests(unittest.TestCase):
    def test_tool_imports_renderer(self):
        tool = _load_tool("dump_defaults")
        self.assertIn("[profile_grid]", tool.render_defaults())


if __name__ == "__main__":
    unittest.main()
