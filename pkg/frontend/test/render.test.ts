import { describe, expect, it } from 'vitest';

import { composeOverlay, PALETTE } from '../src/render';

describe('composeOverlay', () => {
  it('opacity 0 yields the pure CT view', () => {
    const ct = new Uint8Array([0, 60, 128, 255]);
    const mask = new Uint8Array([0, 1, 2, 3]);
    const rgba = composeOverlay(ct, mask, 0);
    for (let i = 0; i < ct.length; i++) {
      expect(rgba[4 * i]).toBe(ct[i]);
      expect(rgba[4 * i + 1]).toBe(ct[i]);
      expect(rgba[4 * i + 2]).toBe(ct[i]);
      expect(rgba[4 * i + 3]).toBe(255);
    }
  });

  it('full opacity paints the fixed palette on labeled pixels only', () => {
    const ct = new Uint8Array([90, 90, 90, 90]);
    const mask = new Uint8Array([0, 1, 2, 3]);
    const rgba = composeOverlay(ct, mask, 1);
    expect([rgba[0], rgba[1], rgba[2]]).toEqual([90, 90, 90]); // background
    expect([rgba[4], rgba[5], rgba[6]]).toEqual(PALETTE[1]); // muscle red
    expect([rgba[8], rgba[9], rgba[10]]).toEqual(PALETTE[2]); // SFA yellow
    expect([rgba[12], rgba[13], rgba[14]]).toEqual(PALETTE[3]); // VFA blue
  });

  it('rejects mismatched buffer sizes', () => {
    expect(() =>
      composeOverlay(new Uint8Array(4), new Uint8Array(5), 0.5),
    ).toThrow();
  });
});
