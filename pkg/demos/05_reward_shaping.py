"""Base rewards and the shaping potential along an encounter.

The potential is an inverted pyramid inside the penalty cylinder (zero on
its rim, -2 at contact) and minus the remaining command count when alone, so
every separation gain and every goal-ward command pays roughly +1 through
the temporal difference of the potential.
"""

import numpy as np

import skygraph as sg
from skygraph.simulation import ProximityClass
from skygraph.training import TrainConfig, potential, shaped_reward

cfg = sg.SimConfig()
tcfg = TrainConfig()


def own(z_des=8000.0):
    return sg.AircraftState(
        id=0, x=0, y=0, z=8000.0, h=0, s=230.0, z_des=z_des, s_des=230.0, h_des=0.0
    )


def intruder(d_h, d_v=0.0):
    return sg.AircraftState(
        id=1, x=d_h, y=0, z=8000.0 + d_v, h=180.0, s=230.0,
        z_des=8000.0, s_des=230.0, h_des=180.0,
    )


print("potential vs horizontal distance to an intruder (same altitude):")
for d_h in (9260.0, 8000.0, 6000.0, 4000.0, 2000.0, 500.0):
    other = intruder(d_h)
    cls = sg.classify_pair(own(), other, cfg)
    phi = potential(own(), [(other, cls)], cfg, tcfg)
    print(f"  d_h={d_h:7.0f} m  class={cls.name:<9}  phi={phi:+.3f}")

print("\npotential vs remaining goal distance (empty neighborhood):")
for z_des in (8000.0, 8100.0, 8500.0, 9000.0):
    phi = potential(own(z_des=z_des), [], cfg, tcfg)
    print(f"  z_des={z_des:.0f} m  phi={phi:+.1f}  (minus remaining climbs)")

print("\nshaped reward for one climb toward a goal 300 m above:")
phi_before = potential(own(z_des=8300.0), [], cfg, tcfg)
after = sg.step_aircraft(own(z_des=8300.0), sg.Action.CLIMB, cfg.dt_s, cfg)
phi_after = potential(after, [], cfg, tcfg)
r = shaped_reward(0.0, phi_before, phi_after, tcfg.gamma)
print(f"  phi {phi_before:+.1f} -> {phi_after:+.1f}, shaped reward {r:+.3f}")

print("\nand the base reward table:")
from skygraph.training import base_reward

rows = [
    ("crashed", (own(), True, True, True)),
    ("uncontrollable", (own(), True, False, False)),
    ("neighbor in penalty", (own(), True, False, True)),
    ("at goal", (own(), False, False, True)),
    ("otherwise", (own(8300.0), False, False, True)),
]
for label, args in rows:
    print(f"  {label:<20} -> {base_reward(*args):+.0f}")
