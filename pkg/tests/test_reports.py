from __future__ import annotations

import json
import math
import tempfile
import unittest
from pathlib import Path

from triple_homog.config import Settings
from triple_homog.experiments import finish
from triple_homog.models import SweepRecord
from triple_homog.reports import read_csv, record_row, write_csv, write_summary


class CsvTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_round_trip_with_hash_line(self) -> None:
        path = write_csv(self.root / "out" / "rows.csv", ["medium", "eps", "ok"], [{"medium": "1,4,0.5", "eps": 0.25, "ok": True}], "abc")
        config, rows = read_csv(path)
        self.assertEqual(config, "abc")
        self.assertEqual(rows, [{"medium": "1,4,0.5", "eps": "2.5000000000000000e-01", "ok": "1"}])
        self.assertTrue(path.read_text(encoding="ascii").startswith("# config_sha256=abc\nmedium,eps,ok\n"))

    def test_missing_fields_are_nan(self) -> None:
        path = write_csv(self.root / "rows.csv", ["eps", "err"], [{"eps": 1}, {"eps": 2, "err": 0.5, "extra": 9}], "h")
        _, rows = read_csv(path)
        self.assertEqual(rows[0]["err"], "nan")
        self.assertEqual(rows[1]["err"], "5.0000000000000000e-01")
        self.assertNotIn("extra", rows[1])

    def test_files_without_hash_are_rejected(self) -> None:
        path = self.root / "plain.csv"
        path.write_text("eps\n1\n", encoding="ascii")
        with self.assertRaises(ValueError):
            read_csv(path)

    def test_repeated_writes_are_identical(self) -> None:
        rows = [{"eps": 2.0**-k, "err": math.pi * 2.0**-k} for k in range(4)]
        first = write_csv(self.root / "a.csv", ["eps", "err"], rows, "h").read_bytes()
        second = write_csv(self.root / "b.csv", ["eps", "err"], rows, "h").read_bytes()
        self.assertEqual(first, second)

    def test_record_row(self) -> None:
        record = SweepRecord(eps=0.1, alpha=1.5, z=complex(-1.0, 0.5), err_first=0.2, extra={"distance": 3.0})
        row = record_row(record, kind="first")
        self.assertEqual(row["z_re"], -1.0)
        self.assertEqual(row["z_im"], 0.5)
        self.assertEqual(row["distance"], 3.0)
        self.assertEqual(row["kind"], "first")
        self.assertTrue(math.isnan(row["chi"]))


class SummaryTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_summary_name_and_timestamp(self) -> None:
        path = write_summary(self.root, "resolvent-error", {"command": "resolvent-error"})
        self.assertEqual(path.name, "resolvent_error_summary.json")
        payload = json.loads(path.read_text(encoding="ascii"))
        self.assertIn("written_at", payload)

    def test_finish_requires_gates_and_no_failures(self) -> None:
        settings = Settings(output_dir=self.root)
        empty = finish(settings, {"command": "selftest", "artifacts": [], "gates": {}, "failures": []})
        self.assertFalse(empty["passed"])
        good = finish(settings, {"command": "selftest", "artifacts": [], "gates": {"a": True}, "failures": []})
        self.assertTrue(good["passed"])
        self.assertTrue(Path(good["artifacts"][-1]).exists())
        failed_cell = {"command": "selftest", "artifacts": [], "gates": {"a": True}, "failures": [{"cell": ["x"], "error": "boom"}]}
        self.assertFalse(finish(settings, failed_cell)["passed"])


if __name__ == "__main__":
    unittest.main()
