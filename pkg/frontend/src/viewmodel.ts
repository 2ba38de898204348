// Client-side state: the latest server messages plus derived rendering data.
// Strictly a mirror of what the server sent; no client-side physics.

import { ConfigMsg, EventMsg, ServerMsg, StateMsg } from "./protocol.js";

export const TRAIL_LENGTH = 250; // ~5 s of avatar history at 50 Hz

export class ViewModel {
  config: ConfigMsg | null = null;
  state: StateMsg | null = null;
  trail: Array<[number, number]> = [];
  banner: string | null = "connecting...";
  lastEvent: EventMsg | null = null;
  contactFlash = 0; // frames remaining of the contact outline flash
  dropouts = 0;

  apply(msg: ServerMsg): void {
    switch (msg.type) {
      case "config":
        this.config = msg;
        break;
      case "state":
        this.state = msg;
        this.trail.push([msg.avatar.x, msg.avatar.y]);
        if (this.trail.length > TRAIL_LENGTH) this.trail.shift();
        if (msg.force.contact) this.contactFlash = 8;
        else if (this.contactFlash > 0) this.contactFlash -= 1;
        break;
      case "event":
        this.lastEvent = msg;
        if (msg.kind === "dropout") this.dropouts += 1;
        break;
    }
  }

  /** View rotation conveying guidance: displayed minus raw avatar heading. */
  guidanceRotation(): number {
    if (!this.state) return 0;
    return this.state.displayed_heading - this.state.avatar.heading;
  }
}

/**
 * Force-cue arrow length in meters of view space: linear up to 100 N, then
 * logarithmic so crowd-crush forces stay on screen.
 */
export function forceArrowLength(magnitude: number, metersPer100N = 0.8): number {
  if (magnitude <= 0) return 0;
  const scaled = magnitude <= 100 ? magnitude / 100 : 1 + Math.log10(magnitude / 100);
  return scaled * metersPer100N;
}

export function forceMagnitude(fx: number, fy: number): number {
  return Math.hypot(fx, fy);
}
