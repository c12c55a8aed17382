/**
 * Viewer state: tri-planar navigation, the editable axial mask buffer,
 * and an undo/redo history of local edit batches.
 *
 * Masks are only ever mutated locally as a preview; persistence happens
 * exclusively through POST /edits with the last known base version.
 */

import { EditBatch, Stroke } from './api';
import { paintFootprint, Point, rasterizeStroke } from './raster';

export type Plane = 'axial' | 'coronal' | 'sagittal';

export const LABEL_NAMES: Record<number, string> = {
  0: 'background',
  1: 'muscle',
  2: 'sfa',
  3: 'vfa',
};

interface AppliedEdit {
  batch: EditBatch;
  /** Changed pixel indices with their previous values, for exact undo. */
  changed: number[];
  previous: Uint8Array;
}

export class ViewerState {
  studyId: string;
  dims: [number, number, number];
  plane: Plane = 'axial';
  sliceIndex: Record<Plane, number>;
  window: [number, number] = [40, 400];
  overlayOpacity = 0.5;
  activeLabel = 1;
  brushRadius = 3;
  maskVersion = 0;

  /** Current axial mask buffer for sliceIndex.axial, row-major. */
  mask: Uint8Array;
  maskShape: [number, number];

  private undoStack: AppliedEdit[] = [];
  private redoStack: AppliedEdit[] = [];

  constructor(
    studyId: string,
    dims: [number, number, number],
    mask: Uint8Array,
    maskVersion: number,
  ) {
    this.studyId = studyId;
    this.dims = dims;
    this.maskShape = [dims[1], dims[2]];
    if (mask.length !== dims[1] * dims[2]) {
      throw new Error('mask buffer does not match study dims');
    }
    this.mask = mask;
    this.maskVersion = maskVersion;
    this.sliceIndex = {
      axial: Math.floor(dims[0] / 2),
      coronal: Math.floor(dims[1] / 2),
      sagittal: Math.floor(dims[2] / 2),
    };
  }

  get canEdit(): boolean {
    return this.plane === 'axial';
  }

  /** Clicking an axial voxel moves the other two planes to that row/column. */
  syncCrosshair(y: number, x: number): void {
    if (y < 0 || y >= this.dims[1] || x < 0 || x >= this.dims[2]) {
      throw new Error('crosshair outside study bounds');
    }
    this.sliceIndex.coronal = y;
    this.sliceIndex.sagittal = x;
  }

  stepSlice(delta: number): void {
    const axis = { axial: 0, coronal: 1, sagittal: 2 }[this.plane];
    const n = this.dims[axis];
    const next = this.sliceIndex[this.plane] + delta;
    this.sliceIndex[this.plane] = Math.max(0, Math.min(n - 1, next));
  }

  /**
   * Paint a stroke into the local mask. Returns the pending EditBatch, or
   * null when editing is disabled on the current plane (review-only).
   */
  paint(polyline: Point[]): EditBatch | null {
    if (!this.canEdit) {
      return null;
    }
    const fp = rasterizeStroke(this.maskShape, polyline, this.brushRadius);
    const previous = this.mask.slice();
    const changed = paintFootprint(this.mask, fp, this.activeLabel);
    const stroke: Stroke = {
      label: this.activeLabel,
      brush_radius_px: this.brushRadius,
      polyline: polyline.map((p) => [p[0], p[1]]),
    };
    const batch: EditBatch = {
      base_version: this.maskVersion,
      slice_index: this.sliceIndex.axial,
      strokes: [stroke],
    };
    this.undoStack.push({ batch, changed, previous });
    this.redoStack = [];
    return batch;
  }

  undo(): boolean {
    const top = this.undoStack.pop();
    if (!top) {
      return false;
    }
    for (const i of top.changed) {
      this.mask[i] = top.previous[i];
    }
    this.redoStack.push(top);
    return true;
  }

  redo(): boolean {
    const top = this.redoStack.pop();
    if (!top) {
      return false;
    }
    const stroke = top.batch.strokes[0];
    const fp = rasterizeStroke(
      this.maskShape,
      stroke.polyline as Point[],
      stroke.brush_radius_px,
    );
    paintFootprint(this.mask, fp, stroke.label);
    this.undoStack.push(top);
    return true;
  }

  /** Pending batches in application order, for Save / conflict replay. */
  pendingBatches(): EditBatch[] {
    return this.undoStack.map((e) => e.batch);
  }

  /** Server accepted up to `version`; local history is now committed. */
  markSaved(version: number): void {
    this.maskVersion = version;
    this.undoStack = [];
    this.redoStack = [];
  }

  /** Fresh mask fetched after a 409 or resegment: rebase local state. */
  resetMask(mask: Uint8Array, version: number): void {
    if (mask.length !== this.mask.length) {
      throw new Error('mask buffer does not match study dims');
    }
    this.mask = mask;
    this.maskVersion = version;
    this.undoStack = [];
    this.redoStack = [];
  }

  /** Keyboard contract: [ / ] slice step, 1-4 labels, Ctrl+Z/Y history. */
  handleKey(key: string, ctrl = false): boolean {
    if (ctrl && key.toLowerCase() === 'z') {
      return this.undo();
    }
    if (ctrl && key.toLowerCase() === 'y') {
      return this.redo();
    }
    if (key === '[') {
      this.stepSlice(-1);
      return true;
    }
    if (key === ']') {
      this.stepSlice(1);
      return true;
    }
    if (key >= '1' && key <= '4') {
      this.activeLabel = Number(key) - 1;
      return true;
    }
    return false;
  }
}
