// Canvas rendering: top-down dual view. The target environment fills the
// canvas; the room view sits inset in the corner. Guidance is conveyed by
// rotating the target view by the injected offset.

import { ConfigMsg } from "./protocol.js";
import { ViewModel, forceArrowLength, forceMagnitude } from "./viewmodel.js";

export interface Camera {
  cx: number; // world center, m
  cy: number;
  scale: number; // px per m
}

export function fitCamera(config: ConfigMsg, width: number, height: number): Camera {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const [x1, y1, x2, y2] of config.scenario.walls) {
    xs.push(x1, x2);
    ys.push(y1, y2);
  }
  for (const poly of [config.scenario.spawn, config.scenario.goal]) {
    for (const [x, y] of poly) {
      xs.push(x);
      ys.push(y);
    }
  }
  if (xs.length === 0) {
    xs.push(-5, 15);
    ys.push(-5, 5);
  }
  const minX = Math.min(...xs) - 1;
  const maxX = Math.max(...xs) + 1;
  const minY = Math.min(...ys) - 1;
  const maxY = Math.max(...ys) + 1;
  const scale = Math.min(width / (maxX - minX), height / (maxY - minY));
  return { cx: (minX + maxX) / 2, cy: (minY + maxY) / 2, scale };
}

function worldToCanvas(cam: Camera, w: number, h: number, x: number, y: number): [number, number] {
  // y up in the world, y down on canvas
  return [w / 2 + (x - cam.cx) * cam.scale, h / 2 - (y - cam.cy) * cam.scale];
}

function polyPath(ctx: CanvasRenderingContext2D, cam: Camera, w: number, h: number, pts: number[][]): void {
  ctx.beginPath();
  pts.forEach(([x, y], i) => {
    const [px, py] = worldToCanvas(cam, w, h, x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
}

export function renderTargetView(
  ctx: CanvasRenderingContext2D,
  vm: ViewModel,
  cam: Camera,
  w: number,
  h: number,
): void {
  ctx.save();
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#11161d";
  ctx.fillRect(0, 0, w, h);
  if (!vm.config) {
    ctx.restore();
    return;
  }
  // Guidance cue: imperceptibly rotate the whole scene about the avatar.
  const rot = vm.guidanceRotation();
  if (vm.state && rot !== 0) {
    const [ax, ay] = worldToCanvas(cam, w, h, vm.state.avatar.x, vm.state.avatar.y);
    ctx.translate(ax, ay);
    ctx.rotate(-rot);
    ctx.translate(-ax, -ay);
  }

  const sc = vm.config.scenario;
  ctx.fillStyle = "rgba(220,60,60,0.18)";
  polyPath(ctx, cam, w, h, sc.spawn);
  ctx.closePath();
  ctx.fill();
  ctx.fillStyle = "rgba(60,190,90,0.18)";
  polyPath(ctx, cam, w, h, sc.goal);
  ctx.closePath();
  ctx.fill();

  ctx.strokeStyle = "#d7dde6";
  ctx.lineWidth = 3;
  for (const [x1, y1, x2, y2] of sc.walls) {
    ctx.beginPath();
    const [px1, py1] = worldToCanvas(cam, w, h, x1, y1);
    const [px2, py2] = worldToCanvas(cam, w, h, x2, y2);
    ctx.moveTo(px1, py1);
    ctx.lineTo(px2, py2);
    ctx.stroke();
  }
  ctx.strokeStyle = "#54d169";
  ctx.lineWidth = 4;
  for (const g of sc.gates) {
    ctx.beginPath();
    const [px1, py1] = worldToCanvas(cam, w, h, g.x1, g.y1);
    const [px2, py2] = worldToCanvas(cam, w, h, g.x2, g.y2);
    ctx.moveTo(px1, py1);
    ctx.lineTo(px2, py2);
    ctx.stroke();
  }

  if (vm.config.targetPath) {
    ctx.strokeStyle = "rgba(120,160,255,0.5)";
    ctx.lineWidth = 1.5;
    polyPath(ctx, cam, w, h, vm.config.targetPath);
    ctx.stroke();
  }

  if (vm.trail.length > 1) {
    ctx.strokeStyle = "rgba(255,120,70,0.6)";
    ctx.lineWidth = 2;
    polyPath(ctx, cam, w, h, vm.trail);
    ctx.stroke();
  }

  const st = vm.state;
  if (st) {
    ctx.fillStyle = "#9fb3c8";
    for (const p of st.peds) {
      const [px, py] = worldToCanvas(cam, w, h, p.x, p.y);
      ctx.beginPath();
      ctx.arc(px, py, 0.3 * cam.scale, 0, 2 * Math.PI);
      ctx.fill();
    }
    // Avatar: highlighted disc plus heading tick; outline flashes on contact.
    const [ax, ay] = worldToCanvas(cam, w, h, st.avatar.x, st.avatar.y);
    ctx.beginPath();
    ctx.arc(ax, ay, 0.3 * cam.scale, 0, 2 * Math.PI);
    ctx.fillStyle = "#ff7a45";
    ctx.fill();
    if (vm.contactFlash > 0) {
      ctx.strokeStyle = "#ffd23f";
      ctx.lineWidth = 4;
      ctx.stroke();
    }
    ctx.strokeStyle = "#ffe8dd";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(
      ax + 0.55 * cam.scale * Math.cos(st.avatar.heading),
      ay - 0.55 * cam.scale * Math.sin(st.avatar.heading),
    );
    ctx.stroke();
  }
  ctx.restore();
}

export function renderRoomView(
  ctx: CanvasRenderingContext2D,
  vm: ViewModel,
  w: number,
  h: number,
): void {
  ctx.save();
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "rgba(18,24,32,0.92)";
  ctx.fillRect(0, 0, w, h);
  const room = vm.config?.room;
  if (!room) {
    ctx.restore();
    return;
  }
  const pad = 8;
  const scale = Math.min((w - 2 * pad) / room.width, (h - 2 * pad) / room.height);
  const toCanvas = (x: number, y: number): [number, number] => [
    pad + x * scale,
    h - pad - y * scale,
  ];
  ctx.strokeStyle = "#8ea4bc";
  ctx.lineWidth = 2;
  ctx.strokeRect(pad, h - pad - room.height * scale, room.width * scale, room.height * scale);

  if (vm.config?.userPath) {
    ctx.strokeStyle = "rgba(120,160,255,0.7)";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    vm.config.userPath.forEach(([x, y], i) => {
      const [px, py] = toCanvas(x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }

  const st = vm.state;
  if (st) {
    const [ux, uy] = toCanvas(st.user.x, st.user.y);
    ctx.beginPath();
    ctx.arc(ux, uy, 5, 0, 2 * Math.PI);
    ctx.fillStyle = "#4fc3f7";
    ctx.fill();
    ctx.strokeStyle = "#d2ecff";
    ctx.beginPath();
    ctx.moveTo(ux, uy);
    ctx.lineTo(ux + 12 * Math.cos(st.user.heading), uy - 12 * Math.sin(st.user.heading));
    ctx.stroke();

    // Force cue anchored on the user marker, drawn in the user frame.
    const mag = forceMagnitude(st.force.fx, st.force.fy);
    if (mag > 0) {
      const len = forceArrowLength(mag) * scale;
      const ang = Math.atan2(st.force.fy, st.force.fx);
      const tipX = ux + len * Math.cos(ang);
      const tipY = uy - len * Math.sin(ang);
      ctx.strokeStyle = "#ff5252";
      ctx.lineWidth = 3;
      ctx.beginPath();
      ctx.moveTo(ux, uy);
      ctx.lineTo(tipX, tipY);
      ctx.stroke();
      ctx.beginPath();
      ctx.arc(tipX, tipY, 3, 0, 2 * Math.PI);
      ctx.fillStyle = "#ff5252";
      ctx.fill();
    }
  }
  ctx.restore();
}
