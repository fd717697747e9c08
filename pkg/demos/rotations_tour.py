"""
Rotation plumbing: axis-angle -> quaternion -> Euler -> back
============================================================

Pose channels travel as 3-vector axis-angles and leave as intrinsic
x-y-z Euler angles. This walks one rotation through every stop.
"""

import numpy as np

from relisten.mapper import axis_angle_to_quaternion, quaternion_to_xyz_euler

np.set_printoptions(precision=6, suppress=True)


def euler_to_matrix(e):
    # intrinsic x-y-z: R = Rx @ Ry @ Rz
    cx, sx = np.cos(e[0]), np.sin(e[0])
    cy, sy = np.cos(e[1]), np.sin(e[1])
    cz, sz = np.cos(e[2]), np.sin(e[2])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rx @ ry @ rz

# a nod: 0.4 rad about an axis tilted off vertical
aa = np.array([0.38, 0.1, -0.05])
print("axis-angle      ", aa, " angle =", round(float(np.linalg.norm(aa)), 4), "rad")

q = axis_angle_to_quaternion(aa)
print("quaternion wxyz ", np.array([q.w, q.x, q.y, q.z]), " norm =", q.norm())

e = quaternion_to_xyz_euler(q)
print("euler xyz (rad) ", e)

R = euler_to_matrix(e)
print("rotation matrix\n", R)
print("R @ R.T - I frobenius:", np.linalg.norm(R @ R.T - np.eye(3)))

# Round-trip error over a cloud of random rotations. The double cover is
# collapsed (w >= 0) so equality is checked on matrices, not quaternions.
rng = np.random.default_rng(0)
axes = rng.normal(size=(2000, 3))
axes /= np.linalg.norm(axes, axis=1, keepdims=True)
cloud = axes * rng.uniform(0, 2.5, (2000, 1))

worst = 0.0
for v in cloud:
    Ra = euler_to_matrix(quaternion_to_xyz_euler(axis_angle_to_quaternion(v)))
    c, s = np.cos, np.sin
    # direct Rodrigues form for reference
    th = np.linalg.norm(v)
    k = v / th
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    Rb = np.eye(3) + s(th) * K + (1 - c(th)) * (K @ K)
    worst = max(worst, float(np.linalg.norm(Ra - Rb)))

print()
print("worst frobenius error over 2000 random rotations:", worst)

# Near gimbal lock (pitch -> pi/2) the x/z split is degenerate; the
# converter zeroes x and parks everything in z, so matrices still agree.
near_lock = np.array([0.3, np.pi / 2 - 1e-9, 0.2])
q2 = axis_angle_to_quaternion(near_lock)
e2 = quaternion_to_xyz_euler(q2)
print("near gimbal lock euler:", e2, " (x forced to 0 when |pitch| ~ pi/2)")
