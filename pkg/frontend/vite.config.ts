import { defineConfig } from "vitest/config";

// The dev server proxies API routes to the cleanup service so the UI can be
// developed against `focuskit serve-cleanup --cloud <cloud.ply>` without CORS
// configuration. Override the target with FOCUSKIT_SERVICE if the service
// listens elsewhere.
const serviceUrl = process.env.FOCUSKIT_SERVICE ?? "http://127.0.0.1:8000";

const apiRoutes = ["/info", "/cloud", "/render", "/edit", "/undo", "/save"];

export default defineConfig({
  server: {
    proxy: Object.fromEntries(apiRoutes.map((route) => [route, { target: serviceUrl, changeOrigin: true }])),
  },
  build: {
    chunkSizeWarningLimit: 1200,
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
