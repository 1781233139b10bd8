/**
 * Browser entry point: form controls, dual-view canvases, timeline, story
 * mode.  Requires a running gesture service; the service URL defaults to
 * the page origin.
 */

import { GenerationAttributes, SkeletonInfo } from "./protocol.js";
import { drawFrame } from "./renderer.js";
import { Session, playbackStartThreshold } from "./session.js";
import { Timeline } from "./timeline.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function serviceBase(): string {
  const param = new URLSearchParams(location.search).get("service");
  return param ?? `${location.protocol}//${location.host}`;
}

function wsUrl(base: string): string {
  return base.replace(/^http/, "ws") + "/ws";
}

async function start(): Promise<void> {
  const base = serviceBase();
  const statusEl = $<HTMLSpanElement>("status");
  const summaryEl = $<HTMLSpanElement>("summary");
  const frontCtx = $<HTMLCanvasElement>("front").getContext("2d")!;
  const sideCtx = $<HTMLCanvasElement>("side").getContext("2d")!;
  const size = 320;

  const skeleton: SkeletonInfo = await fetch(`${base}/skeleton`).then((r) => r.json());

  const fpsOut = 120;
  const timeline = new Timeline(fpsOut);
  let started = false;

  const session = new Session(
    wsUrl(base),
    (url) => new WebSocket(url) as never,
    {
      onStatus: (s) => {
        statusEl.textContent = s;
        statusEl.className = `status-${s}`;
      },
      onFrame: () => {
        if (!started && session.buffer.length >= playbackStartThreshold(fpsOut)) {
          started = true;
          timeline.reset();
          timeline.play();
        }
      },
      onDone: (frames, meanMs) => {
        summaryEl.textContent = `${frames} frames, ${meanMs.toFixed(2)} ms/frame`;
        if (!started && session.buffer.length > 0) {
          started = true;
          timeline.reset();
          timeline.play();
        }
        refreshButtons();
      },
      onError: (message) => {
        summaryEl.textContent = `error: ${message}`;
        refreshButtons();
      },
    },
  );
  session.connect();

  const attrs = (): GenerationAttributes => ({
    task: $<HTMLSelectElement>("task").value as GenerationAttributes["task"],
    emotion: $<HTMLSelectElement>("emotion").value,
    gender: $<HTMLSelectElement>("gender").value as GenerationAttributes["gender"],
    handedness: $<HTMLSelectElement>("handedness").value as GenerationAttributes["handedness"],
  });

  const sentenceEl = $<HTMLInputElement>("sentence");
  const submitBtn = $<HTMLButtonElement>("submit");
  const storyEl = $<HTMLTextAreaElement>("story");
  const advanceBtn = $<HTMLButtonElement>("advance");

  const refreshButtons = () => {
    const busy = session.inFlight !== null || session.status !== "connected";
    submitBtn.disabled = busy || !sentenceEl.value.trim();
    advanceBtn.disabled = busy || session.storyRemaining === 0;
  };
  sentenceEl.addEventListener("input", refreshButtons);
  setInterval(refreshButtons, 250);

  submitBtn.addEventListener("click", () => {
    started = false;
    if (session.submitUtterance(sentenceEl.value, attrs(), fpsOut)) {
      summaryEl.textContent = "generating...";
    }
    refreshButtons();
  });

  $<HTMLButtonElement>("loadStory").addEventListener("click", () => {
    const n = session.loadStory(storyEl.value);
    summaryEl.textContent = `story loaded: ${n} lines`;
    refreshButtons();
  });
  advanceBtn.addEventListener("click", () => {
    started = false;
    if (session.advanceStory(attrs(), fpsOut)) {
      summaryEl.textContent = `line ${session.requestsSent} playing (${session.storyRemaining} left)`;
    }
    refreshButtons();
  });

  $<HTMLButtonElement>("play").addEventListener("click", () => timeline.play());
  $<HTMLButtonElement>("pause").addEventListener("click", () => timeline.pause());
  const scrubEl = $<HTMLInputElement>("scrub");
  scrubEl.addEventListener("input", () => {
    timeline.pause();
    const frac = Number(scrubEl.value) / 1000;
    timeline.scrub(Math.round(frac * (session.buffer.length - 1)), session.buffer.length);
  });

  let last = performance.now();
  const loop = (now: number) => {
    timeline.tick(now - last, session.buffer.length);
    last = now;
    const frame = session.buffer[timeline.cursor];
    if (frame) {
      drawFrame(frontCtx, frame, skeleton, "front", size);
      drawFrame(sideCtx, frame, skeleton, "side", size);
      $<HTMLSpanElement>("cursor").textContent = `${timeline.cursor + 1}/${session.buffer.length}`;
      if (!scrubEl.matches(":active") && session.buffer.length > 1) {
        scrubEl.value = String(Math.round((timeline.cursor / (session.buffer.length - 1)) * 1000));
      }
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

start().catch((e) => {
  document.body.insertAdjacentText("beforeend", `viewer failed to start: ${e}`);
});
