// Typed client for the scenario-editing service. Every piece of geometry
// shown in the editor comes from these calls; the UI never recomputes masks
// or generations locally.

import { dumpRecord, parseRecord, Record_ } from "./records.js";
import { parseTensor, Tensor } from "./tensorfile.js";
import { boxField, EditorBox } from "./boxes.js";

export interface MaskPreview {
  pixelCount: number;
  mask: Tensor;
}

export interface JobStatus {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  error?: string;
  resultPaths: string[];
  raw: Record_;
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private async recordRequest(
    method: string,
    path: string,
    body?: { [key: string]: string | number },
  ): Promise<Record_> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      body: body === undefined ? undefined : dumpRecord(body),
    });
    const text = await resp.text();
    const rec = parseRecord(text);
    if (!resp.ok) {
      throw new ServiceError(resp.status, rec["error"] ?? text);
    }
    return rec;
  }

  async scenes(): Promise<string[]> {
    const rec = await this.recordRequest("GET", "/scenes");
    const ids: string[] = [];
    for (let i = 0; i < Number(rec["count"]); i++) ids.push(rec[`scene.${i}`]);
    return ids;
  }

  async sceneBev(sceneId: string): Promise<Tensor> {
    const resp = await fetch(`${this.baseUrl}/scenes/${sceneId}/bev`);
    if (!resp.ok) throw new ServiceError(resp.status, await resp.text());
    return parseTensor(await resp.arrayBuffer());
  }

  async maskPreview(sceneId: string, box: EditorBox): Promise<MaskPreview> {
    const resp = await fetch(`${this.baseUrl}/mask/preview`, {
      method: "POST",
      body: dumpRecord({ scene: sceneId, box: boxField(box) }),
    });
    if (!resp.ok) {
      const rec = parseRecord(await resp.text());
      throw new ServiceError(resp.status, rec["error"] ?? "mask preview failed");
    }
    const count = Number(resp.headers.get("X-Mask-Pixel-Count") ?? "0");
    return { pixelCount: count, mask: parseTensor(await resp.arrayBuffer()) };
  }

  async submitJob(sceneId: string, boxes: EditorBox[], seed: number): Promise<string> {
    const body: { [key: string]: string | number } = { scene: sceneId, seed };
    boxes.forEach((box, i) => {
      body[`box.${i}`] = boxField(box);
    });
    const rec = await this.recordRequest("POST", "/jobs", body);
    return rec["id"];
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    const rec = await this.recordRequest("GET", `/jobs/${jobId}`);
    const resultPaths = Object.keys(rec)
      .filter((k) => k.startsWith("result."))
      .sort((a, b) => Number(a.slice(7)) - Number(b.slice(7)))
      .map((k) => rec[k]);
    return {
      id: rec["id"],
      status: rec["status"] as JobStatus["status"],
      error: rec["error"],
      resultPaths,
      raw: rec,
    };
  }

  async jobResultTensor(jobId: string, name: string): Promise<Tensor> {
    const resp = await fetch(`${this.baseUrl}/jobs/${jobId}/results/${name}`);
    if (!resp.ok) throw new ServiceError(resp.status, await resp.text());
    return parseTensor(await resp.arrayBuffer());
  }

  async jobResultRecord(jobId: string, name: string): Promise<Record_> {
    const resp = await fetch(`${this.baseUrl}/jobs/${jobId}/results/${name}`);
    if (!resp.ok) throw new ServiceError(resp.status, await resp.text());
    return parseRecord(await resp.text());
  }

  async deleteJob(jobId: string): Promise<void> {
    await this.recordRequest("DELETE", `/jobs/${jobId}`);
  }
}

export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}
