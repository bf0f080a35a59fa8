"""End-to-end checks of the cool-sim executable: exit codes and CSV headers.

Usage: cli_smoke.py <cool-sim> <configs dir>
"""

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

TOOL = sys.argv[1]
CONFIGS = Path(sys.argv[2])
failures = []


def cool_sim(*args):
    return subprocess.run([TOOL, *map(str, args)], capture_output=True, text=True, timeout=600)


def expect(name, ok, detail=""):
    print(f"[{'ok' if ok else 'FAIL'}] {name} {detail}")
    if not ok:
        failures.append(name)


def header(path):
    with open(path, newline="") as f:
        return next(csv.reader(f))


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    short = {
        "name": "smoke",
        "detection": {"noise_psd_m2_per_hz": 1.5e-17},
        "controller": {"type": "velocity", "method": "filter", "gamma_fb_hz": 20},
        "simulation": {"duration_s": 3, "transient_s": 0.5, "record_stride": 4},
        "analysis": {"min_energy_samples": 100},
    }
    cfg = tmp / "short.json"
    cfg.write_text(json.dumps(short))

    r = cool_sim("run", cfg, "--seed", 5, "--out", tmp / "run")
    expect("run exits 0", r.returncode == 0, r.stderr.strip())
    expect("trace header", header(tmp / "run" / "trace.csv") == ["t", "x", "v", "x_measured", "feedback"])
    expect("spectrum header", header(tmp / "run" / "spectrum_x.csv") == ["freq_hz", "psd_m2_per_hz"])
    expect("histogram header", header(tmp / "run" / "energy_hist.csv")[:3] == ["E_joule", "count", "pdf"])
    manifest = json.loads((tmp / "run" / "manifest.json").read_text())
    expect("manifest records the seed", manifest.get("seed") == 5, str(manifest.get("seed")))

    again = cool_sim("run", cfg, "--seed", 5, "--out", tmp / "run2")
    same = (tmp / "run" / "trace.csv").read_bytes() == (tmp / "run2" / "trace.csv").read_bytes()
    expect("same seed, same trace", again.returncode == 0 and same)

    bad = dict(short, controller={"type": "velocity", "gamma_fb_hz": -3, "bogus": 1})
    bad_cfg = tmp / "bad.json"
    bad_cfg.write_text(json.dumps(bad))
    r = cool_sim("run", bad_cfg)
    expect("invalid config exits 1", r.returncode == 1, str(r.returncode))
    expect("all problems listed", "bogus" in r.stderr and "gamma_fb" in r.stderr, r.stderr.strip())

    r = cool_sim("run", tmp / "missing.json")
    expect("missing file exits 1", r.returncode == 1, str(r.returncode))
    r = cool_sim("frobnicate")
    expect("unknown subcommand exits 1", r.returncode == 1, str(r.returncode))

    # Modulation in phase with the motion pumps energy in until the state overflows.
    runaway = dict(short, controller={"type": "pll", "zeta": 5, "b3db_hz": 20,
                                      "modulation_depth": 0.9, "feedback_phase_rad": 3.141592653589793})
    runaway["simulation"] = {"duration_s": 4, "record_stride": 4}
    run_cfg = tmp / "runaway.json"
    run_cfg.write_text(json.dumps(runaway))
    r = cool_sim("run", run_cfg, "--out", tmp / "runaway")
    expect("runaway exits 2", r.returncode == 2, f"{r.returncode} {r.stderr.strip()}")

    r = cool_sim("theory", "vd-optimum")
    expect("theory exits 0", r.returncode == 0 and "23" in r.stdout, r.stdout.strip())
    r = cool_sim("theory", "pll-limits")
    expect("theory without a bandwidth exits 1", r.returncode == 1, str(r.returncode))

    spec = {
        "name": "mini",
        "axes": [{"path": "controller.gamma_fb_hz", "values": [5, 50]}],
        "replicates": 1,
        "master_seed": 3,
        "base": short,
    }
    spec_path = tmp / "sweep.json"
    spec_path.write_text(json.dumps(spec))
    r = cool_sim("sweep", spec_path, "--jobs", 2, "--out", tmp / "sweep")
    expect("sweep exits 0", r.returncode == 0, r.stderr.strip()[-200:])
    rows = list(csv.DictReader(open(tmp / "sweep" / "mini.csv")))
    expect("sweep rows", len(rows) == 2 and all(row["status"] == "ok" for row in rows))

    r = cool_sim("reproduce", "fig4a", "--duration-scale", 0.02, "--jobs", 2, "--out", tmp / "fig")
    expect("reproduce exits 0", r.returncode == 0, r.stderr.strip()[-200:])
    expect("reproduce writes the table", (tmp / "fig" / "fig4a.csv").exists())
    r = cool_sim("reproduce", "fig9", "--out", tmp / "fig")
    expect("unknown figure exits 1", r.returncode == 1, str(r.returncode))

    for example in sorted(CONFIGS.glob("*.json")):
        doc = json.loads(example.read_text())
        if "axes" in doc:
            continue
        doc["simulation"]["duration_s"] = min(doc["simulation"].get("duration_s", 5), 5)
        doc["simulation"]["transient_s"] = 0.5
        doc.setdefault("analysis", {})["min_energy_samples"] = 10
        path = tmp / example.name
        path.write_text(json.dumps(doc))
        r = cool_sim("run", path, "--out", tmp / example.stem)
        expect(f"example {example.name} exits 0", r.returncode == 0, r.stderr.strip()[-200:])

sys.exit(1 if failures else 0)
