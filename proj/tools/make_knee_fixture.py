#!/usr/bin/env python3
"""Writes fixtures/knee_exercise.csv: four days of knee rehab sessions,
three channels sampled at 1 Hz. Deterministic for a given seed."""
import math
import random
import sys

DAY_MS = 86_400_000
START = 1_709_539_200_000  # 2024-03-04T08:00:00Z


def main(path, seed=7):
    rng = random.Random(seed)
    rows = []
    for day in range(4):
        t_start = START + day * DAY_MS + rng.randrange(0, 4) * 3_600_000
        rom = 70 + 12 * day  # range of motion improves across days
        for i in range(1000):
            t = t_start + i * 1000
            phase = 2 * math.pi * i / 8.0
            angle = 10 + rom * (0.5 - 0.5 * math.cos(phase)) + rng.gauss(0, 1.5)
            emg = 0.05 + 0.4 * abs(math.sin(phase)) * (1 - 0.08 * day) + abs(rng.gauss(0, 0.02))
            hr = 72 + 25 * (1 - math.exp(-i / 200)) + rng.gauss(0, 2)
            rows.append(("knee_angle_deg", t, round(angle, 2)))
            rows.append(("emg_rms_mv", t, round(emg, 4)))
            rows.append(("heart_rate_bpm", t, round(hr, 1)))
    with open(path, "w", newline="\n") as f:
        f.write("channel,t_ms,value\n")
        for ch, t, v in rows:
            f.write(f"{ch},{t},{v}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/knee_exercise.csv")
