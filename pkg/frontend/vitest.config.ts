import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'jsdom',
    globalSetup: ['test/globalSetup.ts'],
    testTimeout: 20000,
    hookTimeout: 40000,
  },
});
