import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    testTimeout: 30_000,
    hookTimeout: 45_000,
    // the suite drives one live server; keep test files sequential
    fileParallelism: false,
  },
});
