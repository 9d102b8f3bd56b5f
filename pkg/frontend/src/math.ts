/**
 * Pose math for timeline scrubbing: the server interpolates trajectories the
 * same way (linear translation, geodesic rotation), so scrubbed previews match
 * what generation will render at that time.
 *
 * A pose is 12 numbers: 9 rotation entries row-major, then translation in mm.
 */

export type Pose12 = number[];

export interface Quat {
  w: number;
  x: number;
  y: number;
  z: number;
}

export function identityPose(): Pose12 {
  return [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0];
}

export function quatFromRotation(r: number[]): Quat {
  const t = r[0] + r[4] + r[8];
  let w: number, x: number, y: number, z: number;
  if (t > 0) {
    const s = Math.sqrt(t + 1.0) * 2;
    w = 0.25 * s;
    x = (r[7] - r[5]) / s;
    y = (r[2] - r[6]) / s;
    z = (r[3] - r[1]) / s;
  } else if (r[0] >= r[4] && r[0] >= r[8]) {
    const s = Math.sqrt(1.0 + r[0] - r[4] - r[8]) * 2;
    w = (r[7] - r[5]) / s;
    x = 0.25 * s;
    y = (r[1] + r[3]) / s;
    z = (r[2] + r[6]) / s;
  } else if (r[4] >= r[8]) {
    const s = Math.sqrt(1.0 + r[4] - r[0] - r[8]) * 2;
    w = (r[2] - r[6]) / s;
    x = (r[1] + r[3]) / s;
    y = 0.25 * s;
    z = (r[5] + r[7]) / s;
  } else {
    const s = Math.sqrt(1.0 + r[8] - r[0] - r[4]) * 2;
    w = (r[3] - r[1]) / s;
    x = (r[2] + r[6]) / s;
    y = (r[5] + r[7]) / s;
    z = 0.25 * s;
  }
  const n = Math.sqrt(w * w + x * x + y * y + z * z);
  return { w: w / n, x: x / n, y: y / n, z: z / n };
}

export function rotationFromQuat(q: Quat): number[] {
  const { w, x, y, z } = q;
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
}

/** Shortest-path, constant-speed spherical interpolation. */
export function slerp(a: Quat, b: Quat, s: number): Quat {
  let dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  let bw = b.w, bx = b.x, by = b.y, bz = b.z;
  if (dot < 0) {
    dot = -dot;
    bw = -bw; bx = -bx; by = -by; bz = -bz;
  }
  let ka: number, kb: number;
  if (dot > 1 - 1e-12) {
    ka = 1 - s;
    kb = s;
  } else {
    const theta = Math.acos(Math.min(1, dot));
    const sinTheta = Math.sin(theta);
    ka = Math.sin((1 - s) * theta) / sinTheta;
    kb = Math.sin(s * theta) / sinTheta;
  }
  const q = {
    w: ka * a.w + kb * bw,
    x: ka * a.x + kb * bx,
    y: ka * a.y + kb * by,
    z: ka * a.z + kb * bz,
  };
  const n = Math.sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  return { w: q.w / n, x: q.x / n, y: q.y / n, z: q.z / n };
}

export function lerp(a: number[], b: number[], s: number): number[] {
  return a.map((v, i) => (1 - s) * v + s * b[i]);
}

/** Linear translation, geodesic rotation; s = 0/1 return the endpoints as-is. */
export function interpolatePose(a: Pose12, b: Pose12, s: number): Pose12 {
  if (s <= 0) return [...a];
  if (s >= 1) return [...b];
  const rot = rotationFromQuat(
    slerp(quatFromRotation(a.slice(0, 9)), quatFromRotation(b.slice(0, 9)), s));
  return [...rot, ...lerp(a.slice(9), b.slice(9), s)];
}

/** Intrinsic yaw(Z)-pitch(Y)-roll(X) angles in degrees, for numeric entry. */
export function eulerFromRotation(r: number[]): { yaw: number; pitch: number; roll: number } {
  const pitch = Math.asin(Math.max(-1, Math.min(1, -r[6])));
  let yaw: number, roll: number;
  if (Math.abs(r[6]) < 1 - 1e-9) {
    yaw = Math.atan2(r[3], r[0]);
    roll = Math.atan2(r[7], r[8]);
  } else {
    yaw = Math.atan2(-r[1], r[4]);
    roll = 0;
  }
  const deg = 180 / Math.PI;
  return { yaw: yaw * deg, pitch: pitch * deg, roll: roll * deg };
}

export function rotationFromEuler(yawDeg: number, pitchDeg: number, rollDeg: number): number[] {
  const rad = Math.PI / 180;
  const cy = Math.cos(yawDeg * rad), sy = Math.sin(yawDeg * rad);
  const cp = Math.cos(pitchDeg * rad), sp = Math.sin(pitchDeg * rad);
  const cr = Math.cos(rollDeg * rad), sr = Math.sin(rollDeg * rad);
  // R = Rz(yaw) Ry(pitch) Rx(roll)
  return [
    cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
    sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
    -sp, cp * sr, cp * cr,
  ];
}

export function rotationMaxAbsDiff(a: number[], b: number[]): number {
  let worst = 0;
  for (let i = 0; i < 9; i++) worst = Math.max(worst, Math.abs(a[i] - b[i]));
  return worst;
}
