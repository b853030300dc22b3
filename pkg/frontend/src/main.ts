import { ApiClient } from "./api.js";
import { createConsole } from "./app.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("index.html must provide a #app element");
}
createConsole(root, new ApiClient());
