// Job polling with exponential backoff; at most one in-flight poll per job.

import { JobStatus, ServiceClient } from "./api.js";

export interface PollOptions {
  initialDelayMs?: number;
  maxDelayMs?: number;
  timeoutMs?: number;
  onUpdate?: (status: JobStatus) => void;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollJob(
  client: ServiceClient,
  jobId: string,
  opts: PollOptions = {},
): Promise<JobStatus> {
  const initial = opts.initialDelayMs ?? 50;
  const max = opts.maxDelayMs ?? 2000;
  const deadline = Date.now() + (opts.timeoutMs ?? 120_000);
  let delay = initial;
  for (;;) {
    const status = await client.jobStatus(jobId);
    opts.onUpdate?.(status);
    if (status.status === "done" || status.status === "failed") return status;
    if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
    await sleep(delay);
    delay = Math.min(delay * 2, max);
  }
}
