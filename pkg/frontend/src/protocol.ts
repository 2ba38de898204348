// Wire protocol types and guards. One JSON object per message; the server
// speaks newline-delimited JSON over TCP and the same objects over the
// WebSocket bridge, one per text frame.

export interface PoseDto {
  x: number;
  y: number;
  heading: number;
}

export interface AvatarDto extends PoseDto {
  vx: number;
  vy: number;
}

export interface PedDto {
  id: number;
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export interface ForceDto {
  fx: number;
  fy: number;
  contact: boolean;
  frame: string;
}

export interface StateMsg {
  type: "state";
  t: number;
  user: PoseDto;
  avatar: AvatarDto;
  displayed_heading: number;
  peds: PedDto[];
  force: ForceDto;
  guidance: { offset: number };
}

export interface GateDto {
  id: number;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface ScenarioDto {
  name: string;
  walls: number[][];
  gates: GateDto[];
  spawn: number[][];
  goal: number[][];
}

export interface ConfigMsg {
  type: "config";
  scenario: ScenarioDto;
  room: { width: number; height: number; margin: number };
  userPath: number[][] | null;
  targetPath: number[][] | null;
}

export interface EventMsg {
  type: "event";
  t: number;
  kind: string;
  [key: string]: unknown;
}

export type ServerMsg = StateMsg | ConfigMsg | EventMsg;

export function helloLine(role: "user" | "viewer", decimate = 1): string {
  return JSON.stringify({ type: "hello", role, decimate });
}

export function poseLine(seq: number, t: number, x: number, y: number, heading: number): string {
  return JSON.stringify({ type: "pose", seq, t, x, y, heading });
}

/** Parse one server message; returns null for anything malformed. */
export function parseServerMessage(raw: string): ServerMsg | null {
  let msg: any;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  switch (msg.type) {
    case "state": {
      if (
        typeof msg.t !== "number" ||
        typeof msg.user?.x !== "number" ||
        typeof msg.avatar?.x !== "number" ||
        !Array.isArray(msg.peds) ||
        typeof msg.force?.fx !== "number" ||
        typeof msg.guidance?.offset !== "number"
      ) {
        return null;
      }
      return msg as StateMsg;
    }
    case "config": {
      const sc = msg.scenario;
      if (!sc || !Array.isArray(sc.walls) || !Array.isArray(sc.gates) || !msg.room) {
        return null;
      }
      return {
        type: "config",
        scenario: {
          name: String(sc.name ?? "scenario"),
          walls: sc.walls,
          gates: sc.gates.map((g: number[]) => ({
            id: g[0],
            x1: g[1],
            y1: g[2],
            x2: g[3],
            y2: g[4],
          })),
          spawn: sc.spawn_surface ?? [],
          goal: sc.goal_surface ?? [],
        },
        room: msg.room,
        userPath: msg.correspondence?.user_points ?? null,
        targetPath: msg.correspondence?.target_points ?? null,
      };
    }
    case "event": {
      if (typeof msg.kind !== "string") return null;
      return msg as EventMsg;
    }
    default:
      return null;
  }
}
