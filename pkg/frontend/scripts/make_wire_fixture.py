"""Regenerate test/fixtures/wire_frames.jsonl from the Python service.

Every line is one message exactly as the websocket server would send it:
a live banner + snapshot, then a replay banner with its frames and the
end message. Run from the repo root after wire-protocol changes:

    python3 frontend/scripts/make_wire_fixture.py
"""

import pathlib

from threadsim.scenario_io import build_runtime, load_scenario, run_scripted
from threadsim.service import ReplayHost, SessionHost

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = ROOT / "frontend" / "test" / "fixtures" / "wire_frames.jsonl"


def main():
    lines = []

    live = build_runtime(load_scenario((ROOT / "scenarios" / "steer_ring.yaml").read_text()))
    host = SessionHost(live, ticks=0)
    lines.append(host.scene_message())
    lines.append(host.latest_frame)

    scripted = build_runtime(load_scenario((ROOT / "scenarios" / "hernia_ring.yaml").read_text()))
    record = run_scripted(scripted, ticks=30)
    replay = ReplayHost(record, scene=scripted)
    lines.append(replay.scene_message())
    lines.extend(replay.frames)
    lines.append('{"type":"end","frames":%d}' % len(replay.frames))

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} wire messages to {OUT}")


if __name__ == "__main__":
    main()
