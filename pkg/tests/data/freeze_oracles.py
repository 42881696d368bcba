"""Regenerate oracle_values.json. Run from the repository root."""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from oracles import START, brute_stats, clip_boundaries, des_drop_oldest  # noqa: E402

values = {
    "stats_five": brute_stats([100, 102, 98, 101, 99]),
    "stats_two": brute_stats([0, 10]),
    "des_250ms_cap1": des_drop_oldest(1000, 45.0, 250.0, 1),
    "des_0ms_cap128": des_drop_oldest(5000, 45.0, 0.0, 128),
    "clips_10min": [b.strftime("%H%M%S") for b in clip_boundaries(START, 600.0, 120.0)],
    "clips_10min_offset": [b.strftime("%H%M%S") for b in clip_boundaries(START.replace(minute=1, second=30), 600.0, 120.0)],
}
out = Path(__file__).with_name("oracle_values.json")
out.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")
print(out.read_text())
