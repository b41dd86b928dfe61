import { setupApp } from "./app.js";

// `?server=http://host:port` points the page at a playground server on
// a different origin; by default it talks to the origin it loaded from.
const server = new URLSearchParams(window.location.search).get("server");

setupApp(document, server === null ? {} : { baseUrl: server }).catch((err) => {
  const toast = document.getElementById("toast");
  if (toast !== null) {
    toast.textContent = String(err);
    toast.classList.add("visible");
  }
  console.error(err);
});
