// Velocity-command kinematic walker: keyboard input integrates a pose that
// statistically resembles a tracked human walker, clamped to the room.

export interface WalkerLimits {
  maxSpeed: number; // m/s
  maxTurnRate: number; // rad/s
}

export const DEFAULT_LIMITS: WalkerLimits = {
  maxSpeed: 1.5,
  maxTurnRate: Math.PI / 2, // 90 deg/s
};

export interface InputState {
  forward: number; // -1..1 (backpedal is half speed)
  turn: number; // -1 (right) .. 1 (left)
}

export interface WalkerPose {
  x: number;
  y: number;
  heading: number;
}

export class Walker {
  pose: WalkerPose;
  seq = 0;
  t = 0;
  clampedLastStep = false;

  constructor(
    start: WalkerPose,
    private roomWidth: number,
    private roomHeight: number,
    private limits: WalkerLimits = DEFAULT_LIMITS,
  ) {
    this.pose = { ...start };
  }

  /** Advance dt seconds under the given input and emit the next pose sample. */
  step(input: InputState, dt: number): { seq: number; t: number } & WalkerPose {
    const turn = clamp(input.turn, -1, 1) * this.limits.maxTurnRate * dt;
    const heading = wrapAngle(this.pose.heading + turn);
    const drive = clamp(input.forward, -1, 1);
    const speed = (drive >= 0 ? drive : 0.5 * drive) * this.limits.maxSpeed;
    const x = this.pose.x + speed * dt * Math.cos(heading);
    const y = this.pose.y + speed * dt * Math.sin(heading);
    const cx = clamp(x, 0, this.roomWidth);
    const cy = clamp(y, 0, this.roomHeight);
    this.clampedLastStep = cx !== x || cy !== y;
    this.pose = { x: cx, y: cy, heading };
    this.seq += 1;
    this.t += dt;
    return { seq: this.seq, t: this.t, ...this.pose };
  }
}

export function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

export function wrapAngle(a: number): number {
  let w = (a + Math.PI) % (2 * Math.PI);
  if (w <= 0) w += 2 * Math.PI;
  return w - Math.PI;
}

/** Map pressed keys to an input command. */
export function inputFromKeys(keys: ReadonlySet<string>): InputState {
  let forward = 0;
  let turn = 0;
  if (keys.has("KeyW") || keys.has("ArrowUp")) forward += 1;
  if (keys.has("KeyS") || keys.has("ArrowDown")) forward -= 1;
  if (keys.has("KeyA") || keys.has("ArrowLeft")) turn += 1;
  if (keys.has("KeyD") || keys.has("ArrowRight")) turn -= 1;
  return { forward, turn };
}
