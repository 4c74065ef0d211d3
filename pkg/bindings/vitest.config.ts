import { defineConfig } from "vitest/config";

// every binding call spawns the Python CLI, so tests need generous timeouts
export default defineConfig({
  test: {
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
