import { describe, expect, it } from "vitest";

import { parseArgs } from "../src/cli.js";

describe("argument parsing", () => {
  it("defaults to an ephemeral loopback port with echo off", () => {
    const opts = parseArgs([]);
    expect(opts.host).toBe("127.0.0.1");
    expect(opts.port).toBe(0);
    expect(opts.config.echo).toBeUndefined();
  });

  it("parses the service and config flags", () => {
    const opts = parseArgs([
      "--echo", "--port", "8123", "--host", "0.0.0.0",
      "--model", "vlm-7b", "--generator", "sd-1.5",
      "--device", "cuda:0", "--cache-dir", "/tmp/imgs",
      "--default-steps", "10",
    ]);
    expect(opts.config.echo).toBe(true);
    expect(opts.port).toBe(8123);
    expect(opts.host).toBe("0.0.0.0");
    expect(opts.config.model).toBe("vlm-7b");
    expect(opts.config.generator).toBe("sd-1.5");
    expect(opts.config.device).toBe("cuda:0");
    expect(opts.config.cacheDir).toBe("/tmp/imgs");
    expect(opts.config.defaultSteps).toBe(10);
  });

  it("rejects unknown flags and bad ports", () => {
    expect(() => parseArgs(["--nope"])).toThrow("unknown flag");
    expect(() => parseArgs(["--port", "70000"])).toThrow("--port");
    expect(() => parseArgs(["--port", "x"])).toThrow("--port");
    expect(() => parseArgs(["--host"])).toThrow("needs a value");
  });
});
