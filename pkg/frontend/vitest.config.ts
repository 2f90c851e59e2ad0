import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // live.test.ts starts a real service; give it room on a cold machine
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
