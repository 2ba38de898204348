import { describe, expect, it } from "vitest";
import { helloLine, parseServerMessage, poseLine } from "../src/protocol.js";

describe("client lines", () => {
  it("hello carries role and decimation", () => {
    expect(JSON.parse(helloLine("viewer", 5))).toEqual({
      type: "hello",
      role: "viewer",
      decimate: 5,
    });
  });

  it("pose carries the tracker-sample fields", () => {
    expect(JSON.parse(poseLine(3, 0.06, 1.5, 2.0, -0.4))).toEqual({
      type: "pose",
      seq: 3,
      t: 0.06,
      x: 1.5,
      y: 2.0,
      heading: -0.4,
    });
  });
});

describe("server message parsing", () => {
  it("accepts a well-formed state", () => {
    const msg = parseServerMessage(JSON.stringify({
      type: "state",
      t: 0.02,
      user: { x: 2, y: 2, heading: 0 },
      avatar: { x: 0, y: 0, heading: 0, vx: 0, vy: 0 },
      displayed_heading: 0,
      peds: [{ id: 0, x: 1, y: 1, vx: 0, vy: 0 }],
      force: { fx: 0, fy: 0, contact: false, frame: "user" },
      guidance: { offset: 0 },
    }));
    expect(msg?.type).toBe("state");
  });

  it("maps config gate arrays into objects", () => {
    const msg = parseServerMessage(JSON.stringify({
      type: "config",
      scenario: {
        name: "hall",
        walls: [[0, 0, 20, 0]],
        gates: [[2, 20, 7, 20, 8]],
        spawn_surface: [[0, 0], [1, 0], [1, 1]],
        goal_surface: [[5, 0], [6, 0], [6, 1]],
      },
      room: { width: 4, height: 4, margin: 0.3 },
      compression: {},
      correspondence: { user_points: [[2, 2]], target_points: [[0, 0]], objective: 1.5 },
    }));
    expect(msg?.type).toBe("config");
    if (msg?.type === "config") {
      expect(msg.scenario.gates[0]).toEqual({ id: 2, x1: 20, y1: 7, x2: 20, y2: 8 });
      expect(msg.userPath).toEqual([[2, 2]]);
    }
  });

  it("drops malformed input without throwing", () => {
    expect(parseServerMessage("{broken")).toBeNull();
    expect(parseServerMessage('{"type":"state"}')).toBeNull();
    expect(parseServerMessage('{"type":"mystery"}')).toBeNull();
    expect(parseServerMessage('"just a string"')).toBeNull();
  });

  it("accepts events with a kind", () => {
    const msg = parseServerMessage('{"type":"event","t":1,"kind":"dropout"}');
    expect(msg?.type).toBe("event");
  });
});
