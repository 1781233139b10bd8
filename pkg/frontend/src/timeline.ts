/**
 * Playback cursor over the frame buffer: play/pause/scrub with wall-clock
 * ticks.  The timeline never mutates frames; it only moves the cursor.
 */

export class Timeline {
  cursor = 0;
  playing = false;
  private accMs = 0;

  constructor(public fps: number) {}

  play(): void {
    this.playing = true;
  }

  pause(): void {
    this.playing = false;
    this.accMs = 0;
  }

  scrub(frame: number, bufferLength: number): void {
    this.cursor = Math.max(0, Math.min(frame, Math.max(0, bufferLength - 1)));
  }

  reset(): void {
    this.cursor = 0;
    this.accMs = 0;
  }

  /**
   * Advance by elapsed wall-clock time; returns the cursor.  The cursor
   * never passes the end of the buffer (it parks on the last frame).
   */
  tick(elapsedMs: number, bufferLength: number): number {
    if (!this.playing || bufferLength === 0) return this.cursor;
    this.accMs += elapsedMs;
    const step = 1000 / this.fps;
    while (this.accMs >= step) {
      this.accMs -= step;
      if (this.cursor < bufferLength - 1) this.cursor += 1;
    }
    return this.cursor;
  }

  atEnd(bufferLength: number): boolean {
    return bufferLength > 0 && this.cursor >= bufferLength - 1;
  }
}
