import { describe, expect, test } from "vitest";

import {
  eulerFromRotation, identityPose, interpolatePose, quatFromRotation,
  rotationFromEuler, rotationFromQuat, rotationMaxAbsDiff, slerp,
} from "../src/math.js";

function rotZ(deg: number): number[] {
  const a = (deg * Math.PI) / 180;
  return [Math.cos(a), -Math.sin(a), 0, Math.sin(a), Math.cos(a), 0, 0, 0, 1];
}

describe("quaternion round trip", () => {
  test("recovers rotations", () => {
    for (const deg of [0, 10, 90, 179, -45]) {
      const r = rotZ(deg);
      const back = rotationFromQuat(quatFromRotation(r));
      expect(rotationMaxAbsDiff(r, back)).toBeLessThan(1e-12);
    }
  });

  test("random-ish axes survive", () => {
    // a few fixed non-axis rotations built from euler angles
    for (const [y, p, r] of [[30, 20, 10], [-60, 45, 170], [90, -89, 5]]) {
      const rot = rotationFromEuler(y, p, r);
      const back = rotationFromQuat(quatFromRotation(rot));
      expect(rotationMaxAbsDiff(rot, back)).toBeLessThan(1e-12);
    }
  });
});

describe("slerp", () => {
  test("endpoints and midpoint", () => {
    const a = quatFromRotation(rotZ(0));
    const b = quatFromRotation(rotZ(90));
    expect(rotationMaxAbsDiff(rotationFromQuat(slerp(a, b, 0)), rotZ(0))).toBeLessThan(1e-12);
    expect(rotationMaxAbsDiff(rotationFromQuat(slerp(a, b, 1)), rotZ(90))).toBeLessThan(1e-12);
    expect(rotationMaxAbsDiff(rotationFromQuat(slerp(a, b, 0.5)), rotZ(45))).toBeLessThan(1e-12);
  });

  test("takes the short path", () => {
    const a = quatFromRotation(rotZ(-170));
    const b = quatFromRotation(rotZ(170));
    // short path crosses 180, not 0
    const mid = rotationFromQuat(slerp(a, b, 0.5));
    expect(rotationMaxAbsDiff(mid, rotZ(180))).toBeLessThan(1e-9);
  });
});

describe("interpolatePose", () => {
  test("endpoints exact and translation linear", () => {
    const a = identityPose();
    const b: number[] = [...rotZ(90), 10, 0, 0];
    expect(interpolatePose(a, b, 0)).toEqual(a);
    expect(interpolatePose(a, b, 1)).toEqual(b);
    const mid = interpolatePose(a, b, 0.3);
    expect(mid[9]).toBeCloseTo(3.0, 12);
    expect(rotationMaxAbsDiff(mid.slice(0, 9), rotZ(27))).toBeLessThan(1e-12);
  });
});

describe("euler entry", () => {
  test("round trips through rotation matrices", () => {
    for (const [y, p, r] of [[15, -30, 60], [0, 0, 0], [-120, 45, -10]]) {
      const rot = rotationFromEuler(y, p, r);
      const e = eulerFromRotation(rot);
      const back = rotationFromEuler(e.yaw, e.pitch, e.roll);
      expect(rotationMaxAbsDiff(rot, back)).toBeLessThan(1e-9);
    }
  });
});
