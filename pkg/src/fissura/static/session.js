/** Annotation session state: the current image, viewport, in-progress
 * polyline (stored in image coordinates, independent of zoom), and the log
 * of submitted annotations. Everything here is DOM-free so it can be
 * driven by tests as a scripted session. */
import { clampToImage, footprintRects, screenToImage, } from "./geometry.js";
export class ValidationError extends Error {
}
export class AnnotationSession {
    constructor(opts) {
        this.viewport = { zoom: 1, panX: 0, panY: 0 };
        this.imageId = null;
        this.imageWidth = 0;
        this.imageHeight = 0;
        this.labels = [];
        this.activeLabel = null;
        this.polyline = [];
        this.log = [];
        this.totalCropsWritten = 0;
        this.lastError = null;
        if (opts.scaleFactor <= 0) {
            throw new ValidationError(`scale factor must be positive, got ${opts.scaleFactor}`);
        }
        this.scaleFactor = opts.scaleFactor;
        this.tileSize = opts.tileSize ?? 224;
        this.cropsPerSegment = opts.cropsPerSegment ?? 5;
    }
    setLabels(labels) {
        this.labels = [...labels];
        if (this.activeLabel !== null && !labels.includes(this.activeLabel)) {
            this.activeLabel = null;
        }
    }
    setActiveLabel(label) {
        if (!this.labels.includes(label)) {
            throw new ValidationError(`unknown label ${label}`);
        }
        this.activeLabel = label;
    }
    openImage(info) {
        this.imageId = info.id;
        this.imageWidth = info.width;
        this.imageHeight = info.height;
        this.polyline = [];
        this.viewport = { zoom: 1, panX: 0, panY: 0 };
        this.lastError = null;
    }
    /** Append a vertex from a screen-space click; out-of-image clicks clamp
     * to the border. Returns the stored image-space point. */
    clickAt(screen) {
        if (this.imageId === null) {
            throw new ValidationError("no image loaded");
        }
        const image = clampToImage(screenToImage(screen, this.viewport), this.imageWidth, this.imageHeight);
        this.polyline.push(image);
        return image;
    }
    undo() {
        this.polyline.pop();
    }
    previewRects() {
        if (this.imageId === null || this.polyline.length < 2) {
            return [];
        }
        return footprintRects(this.polyline, this.cropsPerSegment, this.tileSize, this.scaleFactor, this.imageWidth, this.imageHeight);
    }
    blockReason() {
        if (this.imageId === null)
            return "no image loaded";
        if (this.polyline.length < 2)
            return "draw at least two points";
        if (this.activeLabel === null)
            return "select a label first";
        return null;
    }
    canSubmit() {
        return this.blockReason() === null;
    }
    /** POST the annotation. On success the polyline clears and the crop
     * counter accumulates; on failure the polyline is kept for correction
     * and the error is retained for display. */
    async submit(api) {
        const reason = this.blockReason();
        if (reason !== null) {
            throw new ValidationError(reason);
        }
        const body = {
            imageId: this.imageId,
            label: this.activeLabel,
            scaleFactor: this.scaleFactor,
            polyline: this.polyline.map((p) => [p.x, p.y]),
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
        }
        catch (err) {
            this.lastError = err instanceof Error ? err.message : String(err);
            throw err;
        }
    }
}
