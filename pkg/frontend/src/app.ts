/**
 * DOM glue: wires the canvas, kernel selector, session buttons, drag
 * handling, and the socket into one render loop. All dependencies that
 * touch the outside world (fetch, WebSocket, requestAnimationFrame)
 * are injectable so the whole app runs under a DOM shim in tests.
 */

import { PlaygroundClient, type SocketLike } from "./client.js";
import { DragSource } from "./drag.js";
import { render, type Draw2D } from "./render.js";
import {
  parseModelPayload,
  KERNEL_NAMES,
  type ClientCommand,
  type KernelName,
} from "./protocol.js";
import { screenToWorld } from "./transform.js";
import { ViewModel } from "./viewmodel.js";

export interface AppDeps {
  fetchFn?: (url: string) => Promise<{ ok: boolean; json(): Promise<unknown> }>;
  socketFactory?: (url: string) => SocketLike;
  raf?: (cb: () => void) => void;
  /** e.g. "http://127.0.0.1:8000"; defaults to the page's own origin. */
  baseUrl?: string;
}

export interface AppHandles {
  vm: ViewModel;
  client: PlaygroundClient;
  drag: DragSource;
  /** One animation frame: flush the coalesced drag command and draw. */
  frame: () => void;
}

function mustFind<T extends Element>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as unknown as T;
}

export async function setupApp(doc: Document, deps: AppDeps = {}): Promise<AppHandles> {
  const win = doc.defaultView;
  const fetchFn = deps.fetchFn ?? ((url: string) => fetch(url));
  const base = deps.baseUrl ?? `${win?.location.protocol}//${win?.location.host}`;
  const wsBase = base.replace(/^http/, "ws");
  const socketFactory =
    deps.socketFactory ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);

  const canvas = mustFind<HTMLCanvasElement>(doc, "canvas");
  const kernelSelect = mustFind<HTMLSelectElement>(doc, "kernel");
  const startBtn = mustFind<HTMLButtonElement>(doc, "btn-start");
  const pauseBtn = mustFind<HTMLButtonElement>(doc, "btn-pause");
  const resetBtn = mustFind<HTMLButtonElement>(doc, "btn-reset");
  const pickBtn = mustFind<HTMLButtonElement>(doc, "btn-pick-start");
  const toast = mustFind<HTMLElement>(doc, "toast");
  const status = mustFind<HTMLElement>(doc, "status");

  for (const name of KERNEL_NAMES) {
    const opt = doc.createElement("option");
    opt.value = name;
    opt.textContent = name;
    kernelSelect.appendChild(opt);
  }

  const res = await fetchFn(`${base}/model`);
  if (!res.ok) throw new Error(`GET /model failed`);
  const model = parseModelPayload(await res.json());
  const vm = new ViewModel(model, canvas.width, canvas.height);

  let toastTimer: ReturnType<typeof setTimeout> | null = null;
  const showToast = (text: string): void => {
    toast.textContent = text;
    toast.classList.add("visible");
    if (toastTimer !== null) clearTimeout(toastTimer);
    toastTimer = setTimeout(() => toast.classList.remove("visible"), 4000);
  };

  const client = new PlaygroundClient(
    socketFactory(`${wsBase}/ws`),
    (msg) => {
      vm.handleMessage(msg);
      if (msg.type === "error") showToast(`${msg.field}: ${msg.error}`);
      if (msg.type === "session") kernelSelect.value = msg.kernel;
    },
    (err) => showToast(err.message),
  );

  const send = (cmd: ClientCommand): void => client.send(cmd);
  startBtn.addEventListener("click", () => send({ kind: "start" }));
  pauseBtn.addEventListener("click", () => send({ kind: "pause" }));
  resetBtn.addEventListener("click", () => send({ kind: "reset" }));
  kernelSelect.addEventListener("change", () =>
    send({ kind: "set_kernel", payload: kernelSelect.value as KernelName }),
  );

  let pickingStart = false;
  pickBtn.addEventListener("click", () => {
    pickingStart = !pickingStart;
    pickBtn.classList.toggle("armed", pickingStart);
  });

  const drag = new DragSource(() => vm.camera);
  const canvasXY = (ev: MouseEvent): [number, number] => {
    const rect = canvas.getBoundingClientRect();
    return [ev.clientX - rect.left, ev.clientY - rect.top];
  };
  canvas.addEventListener("pointerdown", (ev) => {
    const [sx, sy] = canvasXY(ev as MouseEvent);
    if (pickingStart) {
      send({ kind: "set_start", payload: screenToWorld(vm.camera, [sx, sy]) });
      pickingStart = false;
      pickBtn.classList.remove("armed");
      return;
    }
    drag.pointerDown(sx, sy);
  });
  canvas.addEventListener("pointermove", (ev) => {
    const [sx, sy] = canvasXY(ev as MouseEvent);
    drag.pointerMove(sx, sy);
  });
  canvas.addEventListener("pointerup", () => drag.pointerUp());
  canvas.addEventListener("pointerleave", () => drag.pointerUp());

  const ctx = (canvas.getContext("2d") ?? null) as unknown as Draw2D | null;
  const frame = (): void => {
    const cmd = drag.nextCommand();
    if (cmd !== null) send(cmd);
    if (ctx !== null) render(ctx, vm, canvas.width, canvas.height);
    const s = vm.state;
    status.textContent =
      s === null
        ? "waiting"
        : `tick ${s.tick} · cluster ${s.active_cluster} · kv ${s.kv.toFixed(2)}` +
          (s.converged ? " · converged" : "");
  };

  const raf =
    deps.raf ?? ((cb: () => void) => win?.requestAnimationFrame(() => cb()));
  const loop = (): void => {
    frame();
    raf(loop);
  };
  raf(loop);

  return { vm, client, drag, frame };
}
