/** Typed client for the workbench HTTP API. */
export class ApiError extends Error {
    constructor(message, status) {
        super(message);
        this.status = status;
    }
}
export class ApiClient {
    constructor(base = "") {
        this.base = base;
    }
    imageUrl(id) {
        return `${this.base}/api/images/${encodeURIComponent(id)}`;
    }
    labels() {
        return this.getJson("/api/labels");
    }
    images() {
        return this.getJson("/api/images");
    }
    project() {
        return this.getJson("/api/project");
    }
    async submitAnnotation(body) {
        return this.postJson("/api/annotations", body);
    }
    async markDone(id) {
        return this.postJson(`/api/images/${encodeURIComponent(id)}/done`, null);
    }
    async getJson(path) {
        const resp = await fetch(this.base + path);
        if (!resp.ok) {
            throw new ApiError(await describeFailure(resp), resp.status);
        }
        return resp.json();
    }
    async postJson(path, body) {
        const resp = await fetch(this.base + path, {
            method: "POST",
            headers: body === null ? undefined : { "content-type": "application/json" },
            body: body === null ? undefined : JSON.stringify(body),
        });
        if (!resp.ok) {
            throw new ApiError(await describeFailure(resp), resp.status);
        }
        return resp.json();
    }
}
async function describeFailure(resp) {
    try {
        const payload = await resp.json();
        if (payload && typeof payload.detail === "string") {
            return payload.detail;
        }
        return JSON.stringify(payload);
    }
    catch {
        return `HTTP ${resp.status}`;
    }
}
