import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    setupFiles: ["tests/setup.ts"],
    // the e2e file boots the Python service (which trains a model at startup)
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
