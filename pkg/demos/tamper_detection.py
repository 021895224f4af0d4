"""Export a ledger, edit one record, and watch replay verification catch it."""
import json
import sys
import tempfile
from pathlib import Path

from tokengov.harness import bundled_scenario_path, replay_verify, run_scenario


def main():
    out = Path(tempfile.mkdtemp(prefix="tokengov-"))
    report = run_scenario(bundled_scenario_path("case_study_happy"), out_dir=out)
    path = out / "ledger.ndjson"
    clean = replay_verify(path)
    print(f"{path}: ok={clean.ok} records={clean.length}")

    lines = path.read_text().splitlines()
    for n, line in enumerate(lines):
        rec = json.loads(line)
        if rec["kind"] == "Transfer":
            rec["payload"]["amount"] = 1_000  # Bob quietly receives less
            lines[n] = json.dumps(rec, separators=(",", ":"), sort_keys=True)
            break
    forged = out / "forged.ndjson"
    forged.write_text("\n".join(lines) + "\n")
    result = replay_verify(forged)
    print(f"{forged}: ok={result.ok} first bad seq={result.mismatch_seq}")
    return 0 if clean.ok and not result.ok and report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
