/** Viewport transforms and crop-footprint placement.
 *
 * The footprint formula mirrors the server exactly (centers at t = i/(n-1)
 * along each segment, side = roundHalfUp(tileSize / scaleFactor), clamped
 * inward at the borders), so the rectangles previewed while drawing are the
 * rectangles the server will crop.
 */
/** floor(v + 0.5); matches the server's rounding for crop placement. */
export function roundHalfUp(v) {
    return Math.floor(v + 0.5);
}
export function physicalSide(tileSize, scaleFactor) {
    return roundHalfUp(tileSize / scaleFactor);
}
export function screenToImage(p, vp) {
    return { x: p.x / vp.zoom + vp.panX, y: p.y / vp.zoom + vp.panY };
}
export function imageToScreen(p, vp) {
    return { x: (p.x - vp.panX) * vp.zoom, y: (p.y - vp.panY) * vp.zoom };
}
export function clampToImage(p, width, height) {
    return {
        x: Math.min(Math.max(p.x, 0), width - 1),
        y: Math.min(Math.max(p.y, 0), height - 1),
    };
}
/** Evenly spaced crop centers per segment, endpoints included; zero-length
 * segments are skipped (the server skips them too). */
export function cropCenters(polyline, cropsPerSegment) {
    const centers = [];
    for (let i = 0; i + 1 < polyline.length; i++) {
        const a = polyline[i];
        const b = polyline[i + 1];
        if (a.x === b.x && a.y === b.y)
            continue;
        const n = cropsPerSegment;
        const ts = n === 1 ? [0.5] : Array.from({ length: n }, (_, j) => j / (n - 1));
        for (const t of ts) {
            centers.push({ x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y) });
        }
    }
    return centers;
}
export function footprintRects(polyline, cropsPerSegment, tileSize, scaleFactor, imageWidth, imageHeight) {
    const side = physicalSide(tileSize, scaleFactor);
    return cropCenters(polyline, cropsPerSegment).map((c) => {
        let left = roundHalfUp(c.x - side / 2);
        let top = roundHalfUp(c.y - side / 2);
        left = Math.min(Math.max(left, 0), imageWidth - side);
        top = Math.min(Math.max(top, 0), imageHeight - side);
        return { x: left, y: top, side };
    });
}
