import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // the smoke test drives a live session for a real 30 seconds
    testTimeout: 90_000,
    hookTimeout: 30_000,
  },
});
