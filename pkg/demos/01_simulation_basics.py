"""Spawn one crash-guaranteed aircraft pair and watch it play out.

Both aircraft start on the border of a 150 km circular airspace on courses
that meet if nobody intervenes. With no controller the event log shows the
conflict (penalty-cylinder violation) followed by the crash.
"""

import numpy as np

import skygraph as sg

cfg = sg.SimConfig()
rng = np.random.default_rng(42)

pair = sg.spawn_conflict_pair(rng, cfg)
for st in pair:
    print(
        f"aircraft {st.id}: pos=({st.x / 1000:+7.1f}, {st.y / 1000:+7.1f}) km  "
        f"alt={st.z:.0f} m  heading={st.h:.0f} deg  speed={st.s:.0f} m/s"
    )

world = sg.World(cfg)
world.spawn_pair(pair)

print("\nno-action rollout:")
while world.aircraft:
    for event in world.step({}):
        ids = ",".join(str(a) for a in event.aircraft)
        print(f"  t={event.time_s:7.1f}s  {event.kind:<12} aircraft {ids}")
    if world.time_s > 3600:
        break

print("\nthe same pair, but the second aircraft climbs twice when told to:")
world = sg.World(cfg)
world.spawn_pair(pair)
step = 0
while world.aircraft and world.time_s < 3600:
    actions = {1: sg.Action.CLIMB} if step < 2 else {}
    for event in world.step(actions):
        ids = ",".join(str(a) for a in event.aircraft)
        print(f"  t={event.time_s:7.1f}s  {event.kind:<12} aircraft {ids}")
    step += 1
print("two climbs (200 m) put the pair outside the crash cylinder")
