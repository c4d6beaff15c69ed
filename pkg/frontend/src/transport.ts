/**
 * Playback state machine: turns play/pause/step/dt intents into protocol
 * messages and keeps the UI from stepping while a play loop runs.
 */

import { Session } from "./session.js";

export class Transport {
  playing = false;
  dt = 0.005;
  gridRes = 64;

  constructor(private session: Session) {}

  get canStep(): boolean {
    return !this.playing;
  }

  async play(): Promise<void> {
    if (this.playing) return;
    await this.session.request({ type: "play", dt: this.dt, nx: this.gridRes });
    this.playing = true;
  }

  async pause(): Promise<void> {
    if (!this.playing) return;
    await this.session.request({ type: "pause" });
    this.playing = false;
  }

  async step(n = 1): Promise<void> {
    if (!this.canStep) throw new Error("pause before stepping");
    await this.session.request({ type: "step", n });
  }

  async setDt(dt: number): Promise<void> {
    this.dt = dt;
    if (this.playing) {
      // the play loop picks the new dt up at the next boundary
      await this.session.request({ type: "play", dt, nx: this.gridRes });
    }
  }
}
