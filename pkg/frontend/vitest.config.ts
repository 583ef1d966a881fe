import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    // The live test spawns the python session server and renders real
    // frames; everything else is milliseconds.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
