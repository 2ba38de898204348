// Entry point: connect to the session server, drive the walker with the
// keyboard, and render the dual view.

import { helloLine, parseServerMessage, poseLine } from "./protocol.js";
import { Camera, fitCamera, renderRoomView, renderTargetView } from "./render.js";
import { ViewModel } from "./viewmodel.js";
import { Walker, inputFromKeys } from "./walker.js";

const POSE_INTERVAL_MS = 20; // 50 Hz

function wsUrl(): string {
  const params = new URLSearchParams(location.search);
  return params.get("url") ?? `ws://${location.host}/ws`;
}

function role(): "user" | "viewer" {
  return new URLSearchParams(location.search).get("role") === "viewer"
    ? "viewer"
    : "user";
}

function main(): void {
  const target = document.getElementById("target-view") as HTMLCanvasElement;
  const room = document.getElementById("room-view") as HTMLCanvasElement;
  const banner = document.getElementById("banner") as HTMLDivElement;
  const status = document.getElementById("status") as HTMLDivElement;
  const tctx = target.getContext("2d")!;
  const rctx = room.getContext("2d")!;

  const vm = new ViewModel();
  let camera: Camera | null = null;
  let walker: Walker | null = null;
  let poseTimer: number | null = null;
  const keys = new Set<string>();

  document.addEventListener("keydown", (e) => keys.add(e.code));
  document.addEventListener("keyup", (e) => keys.delete(e.code));
  window.addEventListener("blur", () => keys.clear());

  function connect(): void {
    const ws = new WebSocket(wsUrl());
    vm.banner = "connecting...";

    ws.onopen = () => {
      ws.send(helloLine(role()));
      vm.banner = null;
    };

    ws.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (!msg) {
        console.warn("dropped malformed message", ev.data);
        return;
      }
      vm.apply(msg);
      if (msg.type === "config") {
        camera = fitCamera(msg, target.width, target.height);
        if (role() === "user" && walker === null) {
          walker = new Walker(
            { x: msg.room.width / 2, y: msg.room.height / 2, heading: 0 },
            msg.room.width,
            msg.room.height,
          );
          poseTimer = window.setInterval(() => {
            if (ws.readyState !== WebSocket.OPEN || walker === null) return;
            const s = walker.step(inputFromKeys(keys), POSE_INTERVAL_MS / 1000);
            ws.send(poseLine(s.seq, s.t, s.x, s.y, s.heading));
          }, POSE_INTERVAL_MS);
        }
      }
    };

    ws.onclose = () => {
      // Pause the pose stream and retry; the session is marked interrupted
      // server-side by the resulting dropout gap.
      vm.banner = "connection lost - reconnecting";
      if (poseTimer !== null) {
        clearInterval(poseTimer);
        poseTimer = null;
      }
      walker = null;
      setTimeout(connect, 1000);
    };
  }

  function frame(): void {
    if (camera) {
      renderTargetView(tctx, vm, camera, target.width, target.height);
      renderRoomView(rctx, vm, room.width, room.height);
    }
    banner.style.display = vm.banner ? "block" : "none";
    banner.textContent = vm.banner ?? "";
    if (vm.state) {
      const f = vm.state.force;
      const mag = Math.hypot(f.fx, f.fy).toFixed(0);
      status.textContent =
        `t=${vm.state.t.toFixed(2)}s  peds=${vm.state.peds.length}  ` +
        `force=${mag}N${f.contact ? " CONTACT" : ""}  ` +
        `offset=${((vm.state.displayed_heading - vm.state.avatar.heading) * 57.2958).toFixed(2)}deg  ` +
        `dropouts=${vm.dropouts}`;
    }
    requestAnimationFrame(frame);
  }

  connect();
  requestAnimationFrame(frame);
}

main();
