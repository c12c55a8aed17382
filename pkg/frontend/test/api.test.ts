import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError, EditBatch, FetchLike } from '../src/api';

function fakeFetch(
  handler: (url: string, init?: RequestInit) => Response,
): FetchLike {
  return async (url, init) => handler(url, init);
}

const BATCH: EditBatch = {
  base_version: 0,
  slice_index: 6,
  strokes: [{ label: 1, brush_radius_px: 3, polyline: [[10, 10]] }],
};

describe('ApiClient', () => {
  it('posts edit batches as JSON and returns the new version', async () => {
    let seen: { url: string; body: string } | null = null;
    const api = new ApiClient(
      'http://x',
      fakeFetch((url, init) => {
        seen = { url, body: String(init?.body) };
        return new Response(JSON.stringify({ new_version: 1 }));
      }),
    );
    expect(await api.postEdits('s1', BATCH)).toBe(1);
    expect(seen!.url).toBe('http://x/api/studies/s1/edits');
    expect(JSON.parse(seen!.body)).toEqual(BATCH);
  });

  it('surfaces HTTP status codes as ApiError', async () => {
    const api = new ApiClient(
      '',
      fakeFetch(() => new Response('stale mask version', { status: 409 })),
    );
    await expect(api.postEdits('s1', BATCH)).rejects.toMatchObject({
      status: 409,
    });
    await expect(api.postEdits('s1', BATCH)).rejects.toBeInstanceOf(ApiError);
  });

  it('decodes raw masks with shape and version headers', async () => {
    const payload = new Uint8Array([0, 1, 2, 3, 0, 1]);
    const api = new ApiClient(
      '',
      fakeFetch(
        () =>
          new Response(payload, {
            headers: { 'X-Mask-Shape': '2,3', 'X-Mask-Version': '4' },
          }),
      ),
    );
    const m = await api.getMaskRaw('s1', 6);
    expect(m.shape).toEqual([2, 3]);
    expect(m.version).toBe(4);
    expect(Array.from(m.data)).toEqual([0, 1, 2, 3, 0, 1]);
  });

  it('builds slice URLs with plane, index and window', () => {
    const api = new ApiClient('http://x');
    expect(api.sliceUrl('s1', 'coronal', 9, [40, 400])).toBe(
      'http://x/api/studies/s1/slice?plane=coronal&index=9&window=40,400',
    );
  });
});
