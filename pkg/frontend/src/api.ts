/**
 * Typed client for the refinement service HTTP API.
 *
 * The fetch implementation is injectable so tests can run without a
 * browser or a live server.
 */

export interface StudySummary {
  id: string;
  dims: number[];
  mask_version: number;
}

export interface StudyDetail extends StudySummary {
  spacing: number[];
  localization: { start: number; end: number; method?: string };
}

export interface Stroke {
  label: number;
  brush_radius_px: number;
  polyline: number[][];
}

export interface EditBatch {
  base_version: number;
  slice_index: number;
  strokes: Stroke[];
}

export interface SliceQuantRow {
  slice_index: number;
  area_cm2: Record<string, number>;
  mean_hu: Record<string, number | null>;
}

export interface TissueReport {
  slice_count: number;
  slices: SliceQuantRow[];
  volume_cm3: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      const body = await resp.text();
      throw new ApiError(resp.status, body || resp.statusText);
    }
    return resp;
  }

  async listStudies(): Promise<StudySummary[]> {
    return (await this.request('/api/studies')).json();
  }

  async getStudy(id: string): Promise<StudyDetail> {
    return (await this.request(`/api/studies/${id}`)).json();
  }

  sliceUrl(
    id: string,
    plane: string,
    index: number,
    window?: [number, number],
  ): string {
    const w = window ? `&window=${window[0]},${window[1]}` : '';
    return `${this.baseUrl}/api/studies/${id}/slice?plane=${plane}&index=${index}${w}`;
  }

  /** Fetch the raw axial mask buffer plus its shape and version. */
  async getMaskRaw(
    id: string,
    index: number,
  ): Promise<{ data: Uint8Array; shape: [number, number]; version: number }> {
    const resp = await this.request(
      `/api/studies/${id}/mask?plane=axial&index=${index}&format=raw`,
    );
    const shape = (resp.headers.get('X-Mask-Shape') ?? '0,0')
      .split(',')
      .map(Number) as [number, number];
    const version = Number(resp.headers.get('X-Mask-Version') ?? '0');
    const data = new Uint8Array(await resp.arrayBuffer());
    return { data, shape, version };
  }

  async postEdits(id: string, batch: EditBatch): Promise<number> {
    const resp = await this.request(`/api/studies/${id}/edits`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(batch),
    });
    return (await resp.json()).new_version;
  }

  async resegment(id: string): Promise<number> {
    const resp = await this.request(`/api/studies/${id}/resegment`, {
      method: 'POST',
    });
    return (await resp.json()).new_version;
  }

  async getReport(id: string): Promise<TissueReport> {
    return (await this.request(`/api/studies/${id}/report`)).json();
  }
}
