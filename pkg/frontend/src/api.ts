/** Typed client for the workbench HTTP API. */

export interface ImageInfo {
  id: string;
  width: number;
  height: number;
}

export interface CropRect {
  x: number;
  y: number;
  side: number;
  file: string;
}

export interface AnnotationResponse {
  cropsWritten: number;
  crops: CropRect[];
}

export interface AnnotationRequest {
  imageId: string;
  label: string;
  scaleFactor: number;
  polyline: [number, number][];
  cropsPerSegment?: number;
  tileSize?: number;
}

export interface ProjectSummary {
  root: string;
  labels: string[];
  pendingImages: number;
  doneImages: number;
  cropCounts: Record<string, number>;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  imageUrl(id: string): string {
    return `${this.base}/api/images/${encodeURIComponent(id)}`;
  }

  labels(): Promise<string[]> {
    return this.getJson("/api/labels");
  }

  images(): Promise<ImageInfo[]> {
    return this.getJson("/api/images");
  }

  project(): Promise<ProjectSummary> {
    return this.getJson("/api/project");
  }

  async submitAnnotation(body: AnnotationRequest): Promise<AnnotationResponse> {
    return this.postJson("/api/annotations", body);
  }

  async markDone(id: string): Promise<{ id: string; moved: boolean }> {
    return this.postJson(`/api/images/${encodeURIComponent(id)}/done`, null);
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) {
      throw new ApiError(await describeFailure(resp), resp.status);
    }
    return resp.json() as Promise<T>;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.base + path, {
      method: "POST",
      headers: body === null ? undefined : { "content-type": "application/json" },
      body: body === null ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      throw new ApiError(await describeFailure(resp), resp.status);
    }
    return resp.json() as Promise<T>;
  }
}

async function describeFailure(resp: Response): Promise<string> {
  try {
    const payload = await resp.json();
    if (payload && typeof payload.detail === "string") {
      return payload.detail;
    }
    return JSON.stringify(payload);
  } catch {
    return `HTTP ${resp.status}`;
  }
}
