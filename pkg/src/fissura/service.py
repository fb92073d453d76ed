"""Local HTTP service backing the browser annotation UI.

JSON API under /api; the static UI bundle is served from the package's
``static`` directory at /. Mutating endpoints serialize per image id, and
nothing outside the project root is ever touched.
"""

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, HTMLResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from fissura import imaging
from fissura.errors import FissuraError
from fissura.workbench import Annotation, ProjectLayout, crops_from_path

_PLACEHOLDER = """<!doctype html>
<title>fissura</title>
<p>The annotation UI bundle is not installed. Build the frontend
(<code>cd frontend && npm install && npm run build</code>) or use the JSON
API under <code>/api</code> directly.</p>
"""


class AnnotationBody(BaseModel):
    imageId: str
    label: str
    scaleFactor: float = Field(gt=0)
    polyline: list[tuple[float, float]] = Field(min_length=2)
    cropsPerSegment: int = Field(default=5, ge=1)
    tileSize: int = Field(default=imaging.DEFAULT_TILE_SIZE, ge=8)


def _safe_image_path(layout: ProjectLayout, image_id: str, root_dir: Path) -> Path:
    if "/" in image_id or "\\" in image_id or image_id in (".", ".."):
        raise HTTPException(status_code=400, detail=f"invalid image id {image_id!r}")
    return root_dir / image_id


def create_app(layout: ProjectLayout) -> FastAPI:
    app = FastAPI(title="fissura annotation service")
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def lock_for(image_id: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(image_id, threading.Lock())

    @app.get("/api/project")
    def project_summary():
        crop_counts = {label: sum(1 for _ in layout.label_dir(label).glob("*.png"))
                       for label in layout.labels()}
        return {
            "root": str(layout.root),
            "labels": layout.labels(),
            "pendingImages": len(layout.pending_images()),
            "doneImages": sum(1 for p in layout.done_dir.iterdir() if p.is_file()),
            "cropCounts": crop_counts,
        }

    @app.get("/api/labels")
    def labels():
        return layout.labels()

    @app.get("/api/images")
    def list_images():
        out = []
        for p in layout.pending_images():
            with Image.open(p) as im:
                out.append({"id": p.name, "width": im.width, "height": im.height})
        return out

    @app.get("/api/images/{image_id}")
    def image_bytes(image_id: str):
        path = _safe_image_path(layout, image_id, layout.images_dir)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"no pending image {image_id!r}")
        media = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
        return FileResponse(path, media_type=media)

    @app.post("/api/annotations")
    def submit_annotation(body: AnnotationBody):
        path = _safe_image_path(layout, body.imageId, layout.images_dir)
        if not path.is_file():
            raise HTTPException(status_code=404,
                                detail=f"no pending image {body.imageId!r}")
        annotation = Annotation(image_id=body.imageId, label=body.label,
                                scale_factor=body.scaleFactor,
                                polyline=tuple(body.polyline),
                                crops_per_segment=body.cropsPerSegment)
        with lock_for(body.imageId):
            image = imaging.load_image(path)
            try:
                records = crops_from_path(image, annotation, layout,
                                          tile_size=body.tileSize)
            except FissuraError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "cropsWritten": len(records),
            "crops": [{"x": r.x, "y": r.y, "side": r.side,
                       "file": r.path.name} for r in records],
        }

    @app.post("/api/images/{image_id}/done")
    def mark_done(image_id: str):
        src = _safe_image_path(layout, image_id, layout.images_dir)
        dst = layout.done_dir / image_id
        with lock_for(image_id):
            if dst.is_file() and not src.is_file():
                return {"id": image_id, "moved": False}  # already done
            if not src.is_file():
                raise HTTPException(status_code=404,
                                    detail=f"no pending image {image_id!r}")
            src.rename(dst)
        return {"id": image_id, "moved": True}

    static_dir = Path(__file__).parent / "static"
    if static_dir.is_dir() and (static_dir / "index.html").is_file():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def placeholder():
            return _PLACEHOLDER

    return app


def serve(layout: ProjectLayout, host: str = "127.0.0.1", port: int = 8641) -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(layout), host=host, port=port, log_level="info")
