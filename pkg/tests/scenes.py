"""Synthetic scene builders shared by the test modules."""

from scipy.spatial.transform import Rotation

from pushability import synth


def rock_scene(rock, seed=0, spacing=0.05, density=600, slope_deg=0.0, rotation=None):
    """One rock at (4, 4) on a plane, seen from a robot 3 m away, in the robot frame."""
    t = synth.plane_terrain((8, 8), 0.1, slope_deg)
    placed, _ = synth.place_rock(t, synth.make_rock(rock, rotation, density, seed), 4, 4)
    c = synth.sample_scene(t, [placed], spacing, seed, (2.5, 5.5, 2.5, 5.5))
    return synth.to_robot_frame(c, (1.0, 4.0, float(t.height_at(1.0, 4.0)) + 0.3), 0.0)


def flat_scene(spacing=0.05):
    t = synth.plane_terrain((4, 4), 0.1)
    return synth.sample_scene(t, [], spacing)


def seated_rock_scene(slope_deg=0.0, rock=synth.CATALOG[1], center=(4.0, 4.0), seed=0, spacing=0.03, density=1000):
    """Blocky rock resting flush on a planar ramp that rises along +x, world frame."""
    terrain = synth.plane_terrain((8, 8), 0.1, slope_deg)
    R = Rotation.from_euler("y", -slope_deg, degrees=True).as_matrix()
    placed, _ = synth.place_rock(terrain, synth.make_rock(rock, R, density, seed), *center)
    region = (center[0] - 1.5, center[0] + 1.5, center[1] - 1.5, center[1] + 1.5)
    return synth.sample_scene(terrain, [placed], spacing, seed, region), terrain
