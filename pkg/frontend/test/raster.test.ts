import { readFileSync } from 'node:fs';
import { describe, expect, it } from 'vitest';

import { paintFootprint, Point, rasterizeStroke } from '../src/raster';

interface FixtureCase {
  shape: [number, number];
  polyline: Point[];
  radius: number;
  painted: number[];
}

const FIXTURE: FixtureCase[] = JSON.parse(
  readFileSync(new URL('./fixtures/strokes.json', import.meta.url), 'utf-8'),
);

describe('rasterizeStroke', () => {
  it('paints a disk for a single point', () => {
    const fp = rasterizeStroke([20, 20], [[10, 10]], 3);
    for (let y = 0; y < 20; y++) {
      for (let x = 0; x < 20; x++) {
        const inside = (x - 10) ** 2 + (y - 10) ** 2 <= 9;
        expect(fp[y * 20 + x]).toBe(inside ? 1 : 0);
      }
    }
  });

  it('paints a capsule for a segment', () => {
    const fp = rasterizeStroke(
      [20, 30],
      [
        [5, 10],
        [25, 10],
      ],
      2,
    );
    expect(fp[10 * 30 + 15]).toBe(1);
    expect(fp[12 * 30 + 15]).toBe(1);
    expect(fp[13 * 30 + 15]).toBe(0);
    expect(fp[10 * 30 + 3]).toBe(1); // round cap
    expect(fp[10 * 30 + 2]).toBe(0);
  });

  it('rejects empty polylines and non-positive radii', () => {
    expect(() => rasterizeStroke([8, 8], [], 2)).toThrow();
    expect(() => rasterizeStroke([8, 8], [[1, 1]], 0)).toThrow();
  });

  it('matches the server rasterizer on the 50-stroke fuzz corpus', () => {
    expect(FIXTURE.length).toBe(50);
    for (const c of FIXTURE) {
      const fp = rasterizeStroke(c.shape, c.polyline, c.radius);
      const painted: number[] = [];
      fp.forEach((v, i) => {
        if (v) painted.push(i);
      });
      expect(painted).toEqual(c.painted);
    }
  });
});

describe('paintFootprint', () => {
  it('returns only genuinely changed indices', () => {
    const mask = new Uint8Array([0, 1, 0, 1]);
    const fp = new Uint8Array([1, 1, 0, 1]);
    const changed = paintFootprint(mask, fp, 1);
    expect(changed).toEqual([0]);
    expect(Array.from(mask)).toEqual([1, 1, 0, 1]);
  });
});
