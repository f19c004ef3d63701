"""KF vs PF tracking errors on the synthetic presets, PF averaged over seeds.

    python scripts/compare_trackers.py [--presets A B C D E] [--seeds 10] [--particles 500]
"""

import argparse
import time

from lanetrack import config as C
from lanetrack.evaluation import TrackRecord, compare, mse, report_table
from lanetrack.kalman import run_kalman
from lanetrack.particle import run_particle
from lanetrack.simulator import emit_observations, simulate_trajectory


def run_preset(name, seeds, particles):
    s = C.load_settings(name)
    scen = C.scenario_config(s)
    truth = simulate_trajectory(scen)
    obs = emit_observations(truth, scen, C.observation_config(s))
    kcfg = C.kalman_config(s)
    reports = []
    for side, sets in obs.items():
        kf = TrackRecord.from_states(run_kalman(sets, kcfg), "KF", name, side)
        reports.append(mse(kf, truth))
        for seed in range(seeds):
            pcfg = C.particle_config(s, seed=seed, n_particles=particles)
            pf = TrackRecord.from_states(run_particle(sets, pcfg), "PF", name, side, seed)
            reports.append(mse(pf, truth))
    return reports


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=["A", "B", "C", "D", "E"])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--particles", type=int, default=500)
    args = ap.parse_args()
    t0 = time.perf_counter()
    reports = []
    for name in args.presets:
        reports += run_preset(name, args.seeds, args.particles)
    print(report_table(compare(reports)), end="")
    print(f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
