// Spawns the real geoevidence service (installed Python package) and
// seeds it over HTTP, so the e2e tests exercise the actual wire surface.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import type { TestProject } from "vitest/node";

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
    projectId: string;
    datasetId: string;
    layerId: string;
  }
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address && typeof address === "object") {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitForServer(baseUrl: string, child: ChildProcess, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`service exited early with code ${child.exitCode}`);
    }
    try {
      const resp = await fetch(`${baseUrl}/deposit-models`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error("service did not become ready");
}

function writeFixtures(dir: string): { csv: string; geojson: string } {
  // Eight records with spread-out similarity against the seeded query.
  const descriptions = [
    "granite gneiss schist quartzite marble",
    "granite gneiss schist quartzite",
    "granite gneiss schist",
    "granite gneiss",
    "granite",
    "granite with minor basalt flows",
    "limestone dolostone",
    "alluvium sand gravel deposits",
  ];
  const csvLines = ["UNIT_LINK,UNIT_NAME"];
  const features = descriptions.map((desc, i) => {
    csvLines.push(`U${i},"${desc}"`);
    const lon = -118 + i * 0.02;
    const ring = [
      [lon, 38.0],
      [lon + 0.01, 38.0],
      [lon + 0.01, 38.01],
      [lon, 38.01],
      [lon, 38.0],
    ];
    return {
      type: "Feature",
      properties: { UNIT_LINK: `U${i}` },
      geometry: { type: "Polygon", coordinates: [ring] },
    };
  });
  const csv = join(dir, "attrs.csv");
  const geojson = join(dir, "geom.geojson");
  writeFileSync(csv, csvLines.join("\n") + "\n");
  writeFileSync(geojson, JSON.stringify({ type: "FeatureCollection", features }));
  return { csv, geojson };
}

export default async function setup(project: TestProject): Promise<() => Promise<void>> {
  const workDir = mkdtempSync(join(tmpdir(), "geoev-e2e-"));
  const port = await freePort();
  const baseUrl = `http://127.0.0.1:${port}`;

  const child = spawn(
    "geoevidence",
    ["--data-dir", join(workDir, "data"), "serve", "--host", "127.0.0.1", "--port", String(port)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let serverLog = "";
  child.stdout?.on("data", (chunk) => (serverLog += chunk));
  child.stderr?.on("data", (chunk) => (serverLog += chunk));

  try {
    await waitForServer(baseUrl, child);

    const projectId = "e2e";
    const datasetId = "world";
    const { csv, geojson } = writeFixtures(workDir);

    const post = async (path: string, body: unknown) => {
      const resp = await fetch(baseUrl + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
      if (!resp.ok) throw new Error(`${path} -> ${resp.status}: ${await resp.text()}`);
      return (await resp.json()) as Record<string, unknown>;
    };

    await post("/projects", { project_id: projectId });
    const { job_id } = (await post(`/projects/${projectId}/datasets`, {
      dataset_id: datasetId,
      attributes_path: csv,
      geometry_path: geojson,
      signature_columns: ["UNIT_NAME"],
      key_columns: ["UNIT_LINK"],
      min_desc_length: 0,
    })) as { job_id: string };

    const jobDeadline = Date.now() + 30_000;
    for (;;) {
      const job = (await (await fetch(`${baseUrl}/jobs/${job_id}`)).json()) as {
        status: string;
        error: string | null;
      };
      if (job.status === "done") break;
      if (job.status === "failed") throw new Error(`ingest failed: ${job.error}`);
      if (Date.now() > jobDeadline) throw new Error("ingest timed out");
      await new Promise((resolve) => setTimeout(resolve, 50));
    }

    const query = (await post(`/projects/${projectId}/queries`, {
      dataset_id: datasetId,
      query: "granite gneiss schist quartzite marble",
      tau: 1.0,
    })) as { layer_id: string };

    project.provide("baseUrl", baseUrl);
    project.provide("projectId", projectId);
    project.provide("datasetId", datasetId);
    project.provide("layerId", query.layer_id);
  } catch (error) {
    child.kill("SIGTERM");
    throw new Error(`${String(error)}\nserver log:\n${serverLog}`);
  }

  return async () => {
    child.kill("SIGTERM");
    await new Promise((resolve) => setTimeout(resolve, 200));
    if (child.exitCode === null) child.kill("SIGKILL");
  };
}
