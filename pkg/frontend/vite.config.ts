/// <reference types="vitest/config" />
import { defineConfig } from 'vite';

// The dev server proxies API calls to a locally running editing service
// (stainedit serve --ckpt ... --port 8000).
export default defineConfig({
  server: {
    proxy: {
      '/health': 'http://127.0.0.1:8000',
      '/basis': 'http://127.0.0.1:8000',
      '/images': 'http://127.0.0.1:8000',
      '/transform': 'http://127.0.0.1:8000',
      '/model': 'http://127.0.0.1:8000',
    },
  },
  test: {
    environment: 'node',
  },
});
