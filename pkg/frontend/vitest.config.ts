import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'jsdom',
    include: ['test/**/*.test.ts'],
    // the e2e file trains a small model and boots the real server
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});
