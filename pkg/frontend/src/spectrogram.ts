/** Spectrogram heatmap rendering.
 *
 * The service sends log10 magnitudes (floor 1e-7 → −7). The color scale is
 * FIXED across the whole session rather than normalised per render, so two
 * renders can be compared by eye: the same magnitude is always the same
 * color.
 */

export const LOG_MIN = -7; // log10 of the service's magnitude floor
export const LOG_MAX = 2;

export interface PixelImage {
  width: number;
  height: number;
  /** RGBA, rows top → bottom; highest frequency bin is the top row. */
  data: Uint8ClampedArray;
}

// plasma-like stops, dark → bright
const STOPS: Array<[number, [number, number, number]]> = [
  [0.0, [13, 8, 135]],
  [0.25, [126, 3, 168]],
  [0.5, [204, 71, 120]],
  [0.75, [248, 149, 64]],
  [1.0, [240, 249, 33]],
];

function colorFor(value: number): [number, number, number] {
  let u = (value - LOG_MIN) / (LOG_MAX - LOG_MIN);
  u = Math.min(1, Math.max(0, u));
  for (let k = 1; k < STOPS.length; k++) {
    const [u1, c1] = STOPS[k];
    if (u <= u1) {
      const [u0, c0] = STOPS[k - 1];
      const w = (u - u0) / (u1 - u0);
      return [
        Math.round(c0[0] + w * (c1[0] - c0[0])),
        Math.round(c0[1] + w * (c1[1] - c0[1])),
        Math.round(c0[2] + w * (c1[2] - c0[2])),
      ];
    }
  }
  return STOPS[STOPS.length - 1][1];
}

/** Matrix is frames × bins (time major). Time runs left → right, frequency
 * bottom → top. */
export function spectrogramImage(matrix: number[][]): PixelImage {
  const width = matrix.length;
  const height = width > 0 ? matrix[0].length : 0;
  const data = new Uint8ClampedArray(width * height * 4);
  for (let x = 0; x < width; x++) {
    const column = matrix[x];
    for (let bin = 0; bin < height; bin++) {
      const y = height - 1 - bin; // low frequencies at the bottom
      const [r, g, b] = colorFor(column[bin]);
      const at = (y * width + x) * 4;
      data[at] = r;
      data[at + 1] = g;
      data[at + 2] = b;
      data[at + 3] = 255;
    }
  }
  return { width, height, data };
}

export function drawSpectrogram(canvas: HTMLCanvasElement, matrix: number[][]): void {
  const image = spectrogramImage(matrix);
  if (image.width === 0 || image.height === 0) return;
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(new Uint8ClampedArray(image.data), image.width, image.height), 0, 0);
}
