/**
 * Browser wiring: tri-planar canvases, brush input, save/undo controls,
 * and the quantification panel. All mask mutations flow through
 * ViewerState; persistence only through ApiClient.postEdits.
 */

import { ApiClient, ApiError, TissueReport } from './api';
import { composeOverlay } from './render';
import { Point } from './raster';
import { LABEL_NAMES, Plane, ViewerState } from './state';

const PLANES: Plane[] = ['axial', 'coronal', 'sagittal'];

function showBanner(text: string): void {
  const el = document.getElementById('banner')!;
  el.textContent = text;
  el.style.display = text ? 'block' : 'none';
}

async function drawPlane(
  app: App,
  plane: Plane,
  canvas: HTMLCanvasElement,
): Promise<void> {
  const { state, api } = app;
  const img = new Image();
  img.src = api.sliceUrl(
    state.studyId,
    plane,
    state.sliceIndex[plane],
    state.window,
  );
  await img.decode();
  canvas.width = img.width;
  canvas.height = img.height;
  const ctx = canvas.getContext('2d')!;
  ctx.drawImage(img, 0, 0);
  if (plane !== 'axial' || state.overlayOpacity === 0) {
    return;
  }
  const ct = ctx.getImageData(0, 0, img.width, img.height);
  const gray = new Uint8Array(img.width * img.height);
  for (let i = 0; i < gray.length; i++) {
    gray[i] = ct.data[4 * i];
  }
  const rgba = composeOverlay(gray, state.mask, state.overlayOpacity);
  ctx.putImageData(new ImageData(rgba, img.width, img.height), 0, 0);
}

function renderReport(report: TissueReport): void {
  const rows = report.slices
    .map(
      (s) =>
        `<tr><td>${s.slice_index}</td>` +
        [1, 2, 3]
          .map((l) => `<td>${(s.area_cm2[LABEL_NAMES[l]] ?? 0).toFixed(2)}</td>`)
          .join('') +
        '</tr>',
    )
    .join('');
  const totals = [1, 2, 3]
    .map(
      (l) =>
        `${LABEL_NAMES[l]}: ${(report.volume_cm3[LABEL_NAMES[l]] ?? 0).toFixed(1)} cm³`,
    )
    .join('  ·  ');
  document.getElementById('report-body')!.innerHTML = rows;
  document.getElementById('report-totals')!.textContent = totals;
}

class App {
  stroke: Point[] = [];
  constructor(
    public readonly api: ApiClient,
    public readonly state: ViewerState,
  ) {}

  async redraw(): Promise<void> {
    for (const plane of PLANES) {
      const canvas = document.getElementById(
        `canvas-${plane}`,
      ) as HTMLCanvasElement;
      try {
        await drawPlane(this, plane, canvas);
      } catch {
        showBanner(`failed to load ${plane} slice; showing last good view`);
        return;
      }
    }
    showBanner('');
  }

  async refreshAxialMask(): Promise<void> {
    const { data, version } = await this.api.getMaskRaw(
      this.state.studyId,
      this.state.sliceIndex.axial,
    );
    this.state.resetMask(data, version);
  }

  async save(): Promise<void> {
    for (const batch of this.state.pendingBatches()) {
      try {
        const v = await this.api.postEdits(this.state.studyId, batch);
        this.state.markSaved(v);
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          showBanner('mask changed on the server; refetched — repaint to confirm');
          await this.refreshAxialMask();
        } else if (err instanceof ApiError && err.status === 422) {
          showBanner(`stroke rejected: ${err.message}`);
          this.state.undo();
        } else {
          showBanner('save failed; edits kept locally');
        }
        break;
      }
    }
    await this.redraw();
    await this.refreshReport();
  }

  async refreshReport(): Promise<void> {
    try {
      renderReport(await this.api.getReport(this.state.studyId));
    } catch {
      document.getElementById('report-totals')!.textContent = '(stale)';
    }
  }
}

async function boot(): Promise<void> {
  const api = new ApiClient('');
  const studies = await api.listStudies();
  if (studies.length === 0) {
    showBanner('no studies available');
    return;
  }
  const detail = await api.getStudy(studies[0].id);
  const dims = detail.dims as [number, number, number];
  const state = new ViewerState(
    detail.id,
    dims,
    new Uint8Array(dims[1] * dims[2]),
    detail.mask_version,
  );
  const app = new App(api, state);
  await app.refreshAxialMask();

  const axial = document.getElementById('canvas-axial') as HTMLCanvasElement;
  axial.addEventListener('mousedown', (e) => {
    app.stroke = [[e.offsetX, e.offsetY]];
  });
  axial.addEventListener('mousemove', (e) => {
    if (app.stroke.length > 0 && e.buttons === 1) {
      app.stroke.push([e.offsetX, e.offsetY]);
    }
  });
  axial.addEventListener('mouseup', async () => {
    if (app.stroke.length > 0 && state.paint(app.stroke) !== null) {
      await app.redraw();
    }
    app.stroke = [];
  });
  axial.addEventListener('click', async (e) => {
    state.syncCrosshair(e.offsetY, e.offsetX);
    await app.redraw();
  });

  document.addEventListener('keydown', async (e) => {
    if (state.handleKey(e.key, e.ctrlKey)) {
      e.preventDefault();
      await app.redraw();
    }
  });
  document.getElementById('save')!.addEventListener('click', () => app.save());
  document
    .getElementById('resegment')!
    .addEventListener('click', async () => {
      const v = await api.resegment(state.studyId);
      state.markSaved(v);
      await app.refreshAxialMask();
      await app.redraw();
      await app.refreshReport();
    });
  const opacity = document.getElementById('opacity') as HTMLInputElement;
  opacity.addEventListener('input', async () => {
    state.overlayOpacity = Number(opacity.value);
    await app.redraw();
  });

  await app.redraw();
  await app.refreshReport();
}

if (typeof document !== 'undefined') {
  boot().catch((err) => showBanner(String(err)));
}
