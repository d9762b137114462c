// Polygon editing state, kept free of any DOM dependency so the exact same
// object drives both the canvas and the request bodies.

export type Ring = number[][]; // [[x, y], ...] in image pixel coordinates

function deepCopy(polygons: Ring[]): Ring[] {
  return polygons.map((ring) => ring.map(([x, y]) => [x, y]));
}

export class PolygonEditor {
  private polygons: Ring[] = [];
  private undoStack: Ring[][] = [];
  private editedSinceLoad = false;

  load(polygons: Ring[]): void {
    this.polygons = deepCopy(polygons);
    this.undoStack = [];
    this.editedSinceLoad = false;
  }

  // Deep copy: callers may serialize or mutate it without touching the editor.
  snapshot(): Ring[] {
    return deepCopy(this.polygons);
  }

  get polygonCount(): number {
    return this.polygons.length;
  }

  get dirty(): boolean {
    return this.editedSinceLoad;
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  // One gesture (a whole drag, an insert, a delete) = one undo step.
  // Call before the first mutation of the gesture.
  beginEdit(): void {
    this.undoStack.push(deepCopy(this.polygons));
    this.editedSinceLoad = true;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.polygons = prev;
    if (this.undoStack.length === 0) this.editedSinceLoad = false;
    return true;
  }

  moveVertex(poly: number, vertex: number, x: number, y: number): void {
    this.polygons[poly][vertex] = [x, y];
  }

  vertex(poly: number, vertex: number): number[] {
    const [x, y] = this.polygons[poly][vertex];
    return [x, y];
  }

  // Insert after edge start index, i.e. between vertices i and i+1.
  insertVertex(poly: number, afterIndex: number, x: number, y: number): void {
    this.polygons[poly].splice(afterIndex + 1, 0, [x, y]);
  }

  // A ring needs at least 3 vertices to stay a polygon.
  deleteVertex(poly: number, vertex: number): boolean {
    if (this.polygons[poly].length <= 3) return false;
    this.polygons[poly].splice(vertex, 1);
    return true;
  }

  addPolygon(ring: Ring): void {
    this.polygons.push(ring.map(([x, y]) => [x, y]));
  }

  deletePolygon(poly: number): void {
    this.polygons.splice(poly, 1);
  }
}

export interface VertexHit {
  poly: number;
  vertex: number;
}

export interface EdgeHit {
  poly: number;
  afterIndex: number;
  x: number; // projection of the probe onto the edge
  y: number;
}

export function nearestVertex(
  polygons: Ring[],
  x: number,
  y: number,
  radius: number,
): VertexHit | null {
  let best: VertexHit | null = null;
  let bestD2 = radius * radius;
  polygons.forEach((ring, p) => {
    ring.forEach(([vx, vy], v) => {
      const d2 = (vx - x) ** 2 + (vy - y) ** 2;
      if (d2 <= bestD2) {
        bestD2 = d2;
        best = { poly: p, vertex: v };
      }
    });
  });
  return best;
}

export function nearestEdge(
  polygons: Ring[],
  x: number,
  y: number,
  radius: number,
): EdgeHit | null {
  let best: EdgeHit | null = null;
  let bestD2 = radius * radius;
  polygons.forEach((ring, p) => {
    for (let i = 0; i < ring.length; i++) {
      const [ax, ay] = ring[i];
      const [bx, by] = ring[(i + 1) % ring.length];
      const dx = bx - ax;
      const dy = by - ay;
      const len2 = dx * dx + dy * dy;
      const t = len2 === 0 ? 0 : Math.max(0, Math.min(1, ((x - ax) * dx + (y - ay) * dy) / len2));
      const px = ax + t * dx;
      const py = ay + t * dy;
      const d2 = (px - x) ** 2 + (py - y) ** 2;
      if (d2 <= bestD2) {
        bestD2 = d2;
        best = { poly: p, afterIndex: i, x: px, y: py };
      }
    }
  });
  return best;
}
