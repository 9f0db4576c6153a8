/**
 * Deterministic stroke rasterizer.
 *
 * The sketch document is a resolution-sized grid of 8-bit gray values,
 * white background (255) with black strokes (0). Rasterization is pure
 * integer/float math with no canvas dependency, so the same stroke list
 * always produces the same bytes on every platform.
 */

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  points: Point[];
  /** Stroke diameter in pixels. */
  width: number;
  /** Erase strokes paint background instead of ink. */
  erase: boolean;
}

export interface SketchDocument {
  width: number;
  height: number;
  strokes: Stroke[];
}

export const DEFAULT_STROKE_WIDTH = 2;

export function emptyDocument(width: number, height: number): SketchDocument {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`invalid canvas size ${width}x${height}`);
  }
  return { width, height, strokes: [] };
}

/** Squared distance from pixel center p to the segment ab. */
function distSqToSegment(px: number, py: number, a: Point, b: Point): number {
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const lenSq = dx * dx + dy * dy;
  let t = 0;
  if (lenSq > 0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / lenSq;
    t = Math.max(0, Math.min(1, t));
  }
  const cx = a.x + t * dx - px;
  const cy = a.y + t * dy - py;
  return cx * cx + cy * cy;
}

function paintSegment(
  gray: Uint8Array,
  doc: SketchDocument,
  a: Point,
  b: Point,
  radius: number,
  value: number,
): void {
  const x0 = Math.max(0, Math.floor(Math.min(a.x, b.x) - radius - 1));
  const x1 = Math.min(doc.width - 1, Math.ceil(Math.max(a.x, b.x) + radius + 1));
  const y0 = Math.max(0, Math.floor(Math.min(a.y, b.y) - radius - 1));
  const y1 = Math.min(doc.height - 1, Math.ceil(Math.max(a.y, b.y) + radius + 1));
  const rSq = radius * radius;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if (distSqToSegment(x + 0.5, y + 0.5, a, b) <= rSq) {
        gray[y * doc.width + x] = value;
      }
    }
  }
}

/**
 * Render the document to an 8-bit grayscale buffer, white background and
 * black ink, strokes applied in order (an erase stroke repaints white).
 */
export function rasterize(doc: SketchDocument): Uint8Array {
  const gray = new Uint8Array(doc.width * doc.height).fill(255);
  for (const stroke of doc.strokes) {
    if (stroke.points.length === 0) continue;
    if (!(stroke.width > 0)) throw new Error(`invalid stroke width ${stroke.width}`);
    const value = stroke.erase ? 255 : 0;
    const radius = stroke.width / 2;
    for (let i = 0; i < Math.max(1, stroke.points.length - 1); i++) {
      const a = stroke.points[i];
      const b = stroke.points[Math.min(i + 1, stroke.points.length - 1)];
      paintSegment(gray, doc, a, b, radius, value);
    }
  }
  return gray;
}
