import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { run } from "../src/main.js";

function makeRunDir(files: Record<string, string>): string {
  const dir = mkdtempSync(join(tmpdir(), "plots-cli-"));
  for (const [name, content] of Object.entries(files)) {
    writeFileSync(join(dir, name), content);
  }
  return dir;
}

const CURVES = "budget,accuracy\n0,0.0625\n16,0.5\n32,0.9\n";

describe("plot CLI", () => {
  it("writes the figure next to the CSVs and exits 0", () => {
    const dir = makeRunDir({ "curves.csv": CURVES });
    expect(run(["--kind", "curves", dir])).toBe(0);
    expect(existsSync(join(dir, "curves.svg"))).toBe(true);
  });

  it("re-rendering is idempotent", () => {
    const dir = makeRunDir({ "curves.csv": CURVES });
    run(["--kind", "curves", dir]);
    const first = readFileSync(join(dir, "curves.svg"), "utf-8");
    run(["--kind", "curves", dir]);
    expect(readFileSync(join(dir, "curves.svg"), "utf-8")).toBe(first);
  });

  it("overlays multiple run directories into one figure", () => {
    const a = makeRunDir({ "curves.csv": CURVES });
    const b = makeRunDir({ "curves.csv": CURVES.replace("0.9", "0.7") });
    expect(run(["--kind", "curves", a, b])).toBe(0);
    const svg = readFileSync(join(a, "curves.svg"), "utf-8");
    expect((svg.match(/<polyline/g) ?? []).length).toBe(2);
  });

  it("exits 2 naming the missing column", () => {
    const dir = makeRunDir({ "curves.csv": "budget,acc\n1,0.5\n" });
    expect(run(["--kind", "curves", dir])).toBe(2);
  });

  it("exits 3 on a headers-only CSV", () => {
    const dir = makeRunDir({ "curves.csv": "budget,accuracy\n" });
    expect(run(["--kind", "curves", dir])).toBe(3);
  });

  it("exits 2 when the CSV file is absent", () => {
    const dir = makeRunDir({});
    expect(run(["--kind", "curves", dir])).toBe(2);
  });

  it("rejects unknown figure kinds", () => {
    const dir = makeRunDir({ "curves.csv": CURVES });
    expect(run(["--kind", "barometer", dir])).toBe(1);
  });

  it("renders every available artifact with --kind all", () => {
    const dir = makeRunDir({
      "curves.csv": CURVES,
      "correlation.csv": "segment,corr_v1,corr_v2\n1,,0.8\n4,0.9,0.4\n",
    });
    expect(run(["--kind", "all", dir])).toBe(0);
    expect(existsSync(join(dir, "curves.svg"))).toBe(true);
    expect(existsSync(join(dir, "correlation.svg"))).toBe(true);
    expect(existsSync(join(dir, "variance.svg"))).toBe(false);
  });
});
