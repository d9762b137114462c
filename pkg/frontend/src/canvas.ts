// Canvas overlay: draws the cell image with its polygons and turns pointer
// gestures into editor mutations.  All geometry state lives in the editor;
// this class only renders it and forwards gestures.

import { nearestEdge, nearestVertex, PolygonEditor } from "./geometry.js";

const VERTEX_RADIUS = 5; // css pixels at scale 1
const HIT_RADIUS = 8;

export class OverlayCanvas {
  private ctx: CanvasRenderingContext2D;
  private image: HTMLImageElement | null = null;
  private imageFailed = false;
  private drag: { poly: number; vertex: number } | null = null;
  private dragStarted = false;
  selectedPolygon: number | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly editor: PolygonEditor,
    private readonly onChange: () => void,
    private readonly onImageError: () => void,
  ) {
    const ctx = canvas.getContext("2d");
    if (ctx === null) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
    canvas.addEventListener("dblclick", (e) => this.doubleClick(e));
  }

  setImage(url: string, width: number, height: number): void {
    this.canvas.width = width;
    this.canvas.height = height;
    this.imageFailed = false;
    this.image = new Image();
    this.image.onload = () => this.draw();
    this.image.onerror = () => {
      this.imageFailed = true;
      this.image = null;
      this.draw();
      this.onImageError();
    };
    this.image.src = url;
    this.selectedPolygon = null;
    this.draw();
  }

  retryImage(url: string, width: number, height: number): void {
    // cache-busting query so the browser actually retries
    this.setImage(`${url}?retry=${Date.now()}`, width, height);
  }

  get hasImage(): boolean {
    return this.image !== null && !this.imageFailed;
  }

  // Map a pointer event to image pixel coordinates.
  private toImage(e: PointerEvent | MouseEvent): [number, number] {
    const box = this.canvas.getBoundingClientRect();
    const x = ((e.clientX - box.left) / box.width) * this.canvas.width;
    const y = ((e.clientY - box.top) / box.height) * this.canvas.height;
    return [x, y];
  }

  private pointerDown(e: PointerEvent): void {
    const [x, y] = this.toImage(e);
    const hit = nearestVertex(this.editor.snapshot(), x, y, HIT_RADIUS);
    if (hit !== null) {
      this.drag = hit;
      this.dragStarted = false; // beginEdit lazily on first actual move
      this.selectedPolygon = hit.poly;
      this.canvas.setPointerCapture(e.pointerId);
    } else {
      this.selectedPolygon = null;
    }
    this.draw();
  }

  private pointerMove(e: PointerEvent): void {
    if (this.drag === null) return;
    if (!this.dragStarted) {
      this.editor.beginEdit(); // the whole drag is one undo step
      this.dragStarted = true;
    }
    const [x, y] = this.toImage(e);
    this.editor.moveVertex(this.drag.poly, this.drag.vertex, x, y);
    this.draw();
  }

  private pointerUp(e: PointerEvent): void {
    if (this.drag !== null && this.canvas.hasPointerCapture(e.pointerId)) {
      this.canvas.releasePointerCapture(e.pointerId);
    }
    this.drag = null;
    if (this.dragStarted) this.onChange();
    this.dragStarted = false;
  }

  // Double-click a vertex to delete it, an edge to insert a vertex there.
  private doubleClick(e: MouseEvent): void {
    const [x, y] = this.toImage(e);
    const polygons = this.editor.snapshot();
    const vertexHit = nearestVertex(polygons, x, y, HIT_RADIUS);
    if (vertexHit !== null) {
      this.editor.beginEdit();
      if (!this.editor.deleteVertex(vertexHit.poly, vertexHit.vertex)) {
        this.editor.undo(); // refused: a ring keeps at least 3 vertices
      }
      this.draw();
      this.onChange();
      return;
    }
    const edgeHit = nearestEdge(polygons, x, y, HIT_RADIUS);
    if (edgeHit !== null) {
      this.editor.beginEdit();
      this.editor.insertVertex(edgeHit.poly, edgeHit.afterIndex, edgeHit.x, edgeHit.y);
      this.draw();
      this.onChange();
    }
  }

  addPolygonAtCenter(): void {
    const cx = this.canvas.width / 2;
    const cy = this.canvas.height / 2;
    const r = Math.min(this.canvas.width, this.canvas.height) / 8;
    this.editor.beginEdit();
    this.editor.addPolygon([
      [cx - r, cy - r],
      [cx + r, cy - r],
      [cx + r, cy + r],
      [cx - r, cy + r],
    ]);
    this.selectedPolygon = this.editor.polygonCount - 1;
    this.draw();
    this.onChange();
  }

  deleteSelectedPolygon(): boolean {
    if (this.selectedPolygon === null) return false;
    this.editor.beginEdit();
    this.editor.deletePolygon(this.selectedPolygon);
    this.selectedPolygon = null;
    this.draw();
    this.onChange();
    return true;
  }

  draw(): void {
    const { width, height } = this.canvas;
    this.ctx.clearRect(0, 0, width, height);
    if (this.image !== null && this.image.complete && !this.imageFailed) {
      this.ctx.drawImage(this.image, 0, 0, width, height);
    } else {
      this.ctx.fillStyle = this.imageFailed ? "#3a2222" : "#222";
      this.ctx.fillRect(0, 0, width, height);
    }
    this.editor.snapshot().forEach((ring, p) => {
      const selected = p === this.selectedPolygon;
      this.ctx.beginPath();
      ring.forEach(([x, y], i) => {
        if (i === 0) this.ctx.moveTo(x, y);
        else this.ctx.lineTo(x, y);
      });
      this.ctx.closePath();
      this.ctx.fillStyle = selected ? "rgba(255,160,0,0.25)" : "rgba(255,60,60,0.18)";
      this.ctx.fill();
      this.ctx.strokeStyle = selected ? "#ffa000" : "#ff3c3c";
      this.ctx.lineWidth = 1.5;
      this.ctx.stroke();
      this.ctx.fillStyle = selected ? "#ffa000" : "#ffdddd";
      ring.forEach(([x, y]) => {
        this.ctx.fillRect(x - VERTEX_RADIUS / 2, y - VERTEX_RADIUS / 2, VERTEX_RADIUS, VERTEX_RADIUS);
      });
    });
  }
}
