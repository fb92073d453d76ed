/** Annotation session state: the current image, viewport, in-progress
 * polyline (stored in image coordinates, independent of zoom), and the log
 * of submitted annotations. Everything here is DOM-free so it can be
 * driven by tests as a scripted session. */

import {
  clampToImage,
  footprintRects,
  Point,
  Rect,
  screenToImage,
  Viewport,
} from "./geometry.js";
import { AnnotationRequest, AnnotationResponse, ImageInfo } from "./api.js";

export interface AnnotationApi {
  submitAnnotation(body: AnnotationRequest): Promise<AnnotationResponse>;
}

export interface SubmittedAnnotation {
  imageId: string;
  label: string;
  cropsWritten: number;
}

export class ValidationError extends Error {}

export class AnnotationSession {
  readonly scaleFactor: number;
  readonly tileSize: number;
  cropsPerSegment: number;

  viewport: Viewport = { zoom: 1, panX: 0, panY: 0 };
  imageId: string | null = null;
  imageWidth = 0;
  imageHeight = 0;
  labels: string[] = [];
  activeLabel: string | null = null;
  polyline: Point[] = [];
  log: SubmittedAnnotation[] = [];
  totalCropsWritten = 0;
  lastError: string | null = null;

  constructor(opts: { scaleFactor: number; tileSize?: number; cropsPerSegment?: number }) {
    if (opts.scaleFactor <= 0) {
      throw new ValidationError(`scale factor must be positive, got ${opts.scaleFactor}`);
    }
    this.scaleFactor = opts.scaleFactor;
    this.tileSize = opts.tileSize ?? 224;
    this.cropsPerSegment = opts.cropsPerSegment ?? 5;
  }

  setLabels(labels: string[]): void {
    this.labels = [...labels];
    if (this.activeLabel !== null && !labels.includes(this.activeLabel)) {
      this.activeLabel = null;
    }
  }

  setActiveLabel(label: string): void {
    if (!this.labels.includes(label)) {
      throw new ValidationError(`unknown label ${label}`);
    }
    this.activeLabel = label;
  }

  openImage(info: ImageInfo): void {
    this.imageId = info.id;
    this.imageWidth = info.width;
    this.imageHeight = info.height;
    this.polyline = [];
    this.viewport = { zoom: 1, panX: 0, panY: 0 };
    this.lastError = null;
  }

  /** Append a vertex from a screen-space click; out-of-image clicks clamp
   * to the border. Returns the stored image-space point. */
  clickAt(screen: Point): Point {
    if (this.imageId === null) {
      throw new ValidationError("no image loaded");
    }
    const image = clampToImage(
      screenToImage(screen, this.viewport), this.imageWidth, this.imageHeight);
    this.polyline.push(image);
    return image;
  }

  undo(): void {
    this.polyline.pop();
  }

  previewRects(): Rect[] {
    if (this.imageId === null || this.polyline.length < 2) {
      return [];
    }
    return footprintRects(this.polyline, this.cropsPerSegment, this.tileSize,
                          this.scaleFactor, this.imageWidth, this.imageHeight);
  }

  blockReason(): string | null {
    if (this.imageId === null) return "no image loaded";
    if (this.polyline.length < 2) return "draw at least two points";
    if (this.activeLabel === null) return "select a label first";
    return null;
  }

  canSubmit(): boolean {
    return this.blockReason() === null;
  }

  /** POST the annotation. On success the polyline clears and the crop
   * counter accumulates; on failure the polyline is kept for correction
   * and the error is retained for display. */
  async submit(api: AnnotationApi): Promise<AnnotationResponse> {
    const reason = this.blockReason();
    if (reason !== null) {
      throw new ValidationError(reason);
    }
    const body: AnnotationRequest = {
      imageId: this.imageId as string,
      label: this.activeLabel as string,
      scaleFactor: this.scaleFactor,
      polyline: this.polyline.map((p) => [p.x, p.y] as [number, number]),
      cropsPerSegment: this.cropsPerSegment,
      tileSize: this.tileSize,
    };
    try {
      const resp = await api.submitAnnotation(body);
      this.log.push({
        imageId: body.imageId,
        label: body.label,
        cropsWritten: resp.cropsWritten,
      });
      this.totalCropsWritten += resp.cropsWritten;
      this.polyline = [];
      this.lastError = null;
      return resp;
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    }
  }
}
