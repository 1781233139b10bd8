/**
 * Skeleton drawing: dual orthographic views (front: x/y, side: z/y).
 *
 * The service streams FK world positions with every frame, so no kinematics
 * run here; bones are segments between each joint and its parent from the
 * skeleton table fetched at connect.  Projection math is kept pure for
 * testing; canvas work stays in drawFrame.
 */

import { FrameMessage, SkeletonInfo } from "./protocol.js";

export interface ViewBox {
  /** world-space center and half-extent of the square view window */
  cx: number;
  cy: number;
  half: number;
}

export interface Segment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface ProjectedFrame {
  joints: Array<{ x: number; y: number }>;
  bones: Segment[];
}

/** Pick the two world axes for a view: front = (x, y), side = (z, y). */
export function viewAxes(view: "front" | "side"): [number, number] {
  return view === "front" ? [0, 1] : [2, 1];
}

/** Map a world coordinate pair into pixel space for a square canvas. */
export function projectPoint(
  p: number[],
  axes: [number, number],
  box: ViewBox,
  sizePx: number,
): { x: number; y: number } {
  const u = (p[axes[0]] - box.cx) / (2 * box.half) + 0.5;
  const v = (p[axes[1]] - box.cy) / (2 * box.half) + 0.5;
  return { x: u * sizePx, y: (1 - v) * sizePx }; // pixel y grows downward
}

export function projectFrame(
  frame: FrameMessage,
  skeleton: SkeletonInfo,
  view: "front" | "side",
  box: ViewBox,
  sizePx: number,
): ProjectedFrame {
  const axes = viewAxes(view);
  const joints = frame.pos.map((p) => projectPoint(p, axes, box, sizePx));
  const bones: Segment[] = [];
  for (let j = 0; j < skeleton.parents.length; j++) {
    const parent = skeleton.parents[j];
    if (parent < 0) continue;
    bones.push({ x1: joints[parent].x, y1: joints[parent].y, x2: joints[j].x, y2: joints[j].y });
  }
  return { joints, bones };
}

/** A view box that comfortably frames a seated figure at the origin. */
export function defaultViewBox(): ViewBox {
  return { cx: 0, cy: 0.15, half: 0.95 };
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  frame: FrameMessage,
  skeleton: SkeletonInfo,
  view: "front" | "side",
  sizePx: number,
): void {
  if (!Array.isArray(frame.pos) || frame.pos.length !== skeleton.parents.length) {
    console.warn("viewer: skipping malformed frame", frame.t);
    return;
  }
  const proj = projectFrame(frame, skeleton, view, defaultViewBox(), sizePx);
  ctx.clearRect(0, 0, sizePx, sizePx);
  ctx.strokeStyle = "#8ecae6";
  ctx.lineWidth = 2;
  for (const b of proj.bones) {
    ctx.beginPath();
    ctx.moveTo(b.x1, b.y1);
    ctx.lineTo(b.x2, b.y2);
    ctx.stroke();
  }
  ctx.fillStyle = "#ffb703";
  for (const j of proj.joints) {
    ctx.beginPath();
    ctx.arc(j.x, j.y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.fillStyle = "#888";
  ctx.font = "11px sans-serif";
  ctx.fillText(view, 6, 14);
}
