#!/usr/bin/env node
/**
 * Service entry point.
 *
 *   degf-adapter --echo [--port 8080] [--host 127.0.0.1]
 *
 * Port 0 (the default) binds an ephemeral port; the chosen address is
 * printed as `adapter listening on http://host:port` once the socket is
 * ready, so harnesses can spawn the process and scrape the URL.
 */

import { pathToFileURL } from "node:url";

import { buildService } from "./server.js";
import type { AdapterConfig } from "./provider.js";

interface CliOptions {
  config: Partial<AdapterConfig>;
  host: string;
  port: number;
}

export function parseArgs(argv: string[]): CliOptions {
  const options: CliOptions = { config: {}, host: "127.0.0.1", port: 0 };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = (): string => {
      const value = argv[++i];
      if (value === undefined) {
        throw new Error(`${arg} needs a value`);
      }
      return value;
    };
    switch (arg) {
      case "--echo":
        options.config.echo = true;
        break;
      case "--port":
        options.port = Number(next());
        break;
      case "--host":
        options.host = next();
        break;
      case "--model":
        options.config.model = next();
        break;
      case "--generator":
        options.config.generator = next();
        break;
      case "--device":
        options.config.device = next();
        break;
      case "--cache-dir":
        options.config.cacheDir = next();
        break;
      case "--default-steps":
        options.config.defaultSteps = Number(next());
        break;
      default:
        throw new Error(`unknown flag: ${arg}`);
    }
  }
  if (!Number.isInteger(options.port) || options.port < 0 || options.port > 65535) {
    throw new Error(`--port must be an integer in [0, 65535], got ${options.port}`);
  }
  return options;
}

function runningAsScript(): boolean {
  const entry = process.argv[1];
  return entry !== undefined && import.meta.url === pathToFileURL(entry).href;
}

export function main(argv: string[]): void {
  let options: CliOptions;
  try {
    options = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(2);
  }
  let service;
  try {
    service = buildService(options.config);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(2);
  }
  const server = service.app.listen(options.port, options.host, () => {
    const address = server.address();
    const port = typeof address === "object" && address !== null ? address.port : options.port;
    console.log(`adapter listening on http://${options.host}:${port}`);
  });
  const shutdown = () => server.close(() => process.exit(0));
  process.on("SIGINT", shutdown);
  process.on("SIGTERM", shutdown);
}

if (runningAsScript()) {
  main(process.argv.slice(2));
}
