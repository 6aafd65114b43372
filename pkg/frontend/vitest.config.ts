import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the live-node test compiles keys, spawns a python node, and mines
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
