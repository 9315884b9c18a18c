import { ApiClient } from "./api";
import { AppController } from "./app";
import { render } from "./render";
import "./styles.css";

const root = document.getElementById("root");
if (root === null) throw new Error("missing #root element");

const app = new AppController(new ApiClient());
app.store.subscribe((state) => render(root, state, app));
render(root, app.state, app);
