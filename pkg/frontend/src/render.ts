/**
 * Mask overlay compositing. Fixed palette matching the server's PNG
 * rendering: muscle red, SFA yellow, VFA blue.
 */

export const PALETTE: Record<number, [number, number, number]> = {
  0: [0, 0, 0],
  1: [230, 60, 60],
  2: [235, 220, 80],
  3: [70, 110, 230],
};

/**
 * Blend a grayscale CT slice with the label overlay into an RGBA buffer.
 * Opacity 0 yields the pure CT view; labels of 0 never tint.
 */
export function composeOverlay(
  ct: Uint8Array,
  mask: Uint8Array,
  opacity: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (ct.length !== mask.length) {
    throw new Error('CT and mask buffers differ in size');
  }
  const out = new Uint8ClampedArray(ct.length * 4);
  for (let i = 0; i < ct.length; i++) {
    const g = ct[i];
    const [r, gg, b] = PALETTE[mask[i]] ?? PALETTE[0];
    const a = mask[i] === 0 ? 0 : opacity;
    out[4 * i] = Math.round(g * (1 - a) + r * a);
    out[4 * i + 1] = Math.round(g * (1 - a) + gg * a);
    out[4 * i + 2] = Math.round(g * (1 - a) + b * a);
    out[4 * i + 3] = 255;
  }
  return out;
}
