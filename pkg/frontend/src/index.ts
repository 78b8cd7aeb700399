import { bootstrap } from "./main.js";

declare global {
  interface Window {
    LOADSAFETY_API_BASE?: string;
  }
}

const base = window.LOADSAFETY_API_BASE ?? "http://127.0.0.1:8000";
if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", () => bootstrap(document, base));
} else {
  bootstrap(document, base);
}
