import { describe, expect, it } from "vitest";

import { LOG_MAX, LOG_MIN, spectrogramImage } from "../src/spectrogram";

const fill = (frames: number, bins: number, value: number): number[][] =>
  Array.from({ length: frames }, () => new Array(bins).fill(value));

function pixel(img: { width: number; data: Uint8ClampedArray }, x: number, y: number) {
  const at = (y * img.width + x) * 4;
  return Array.from(img.data.slice(at, at + 4));
}

describe("spectrogramImage", () => {
  it("honors the frame/bin counts of the matrix", () => {
    const img = spectrogramImage(fill(690, 128, -3));
    expect(img.width).toBe(690);
    expect(img.height).toBe(128);
    expect(img.data.length).toBe(690 * 128 * 4);
  });

  it("renders a constant matrix as a uniform image", () => {
    const img = spectrogramImage(fill(8, 6, 0));
    const first = pixel(img, 0, 0);
    for (let x = 0; x < 8; x++) {
      for (let y = 0; y < 6; y++) {
        expect(pixel(img, x, y)).toEqual(first);
      }
    }
    expect(first[3]).toBe(255);
  });

  it("renders identical matrices to identical pixels", () => {
    const matrix = [
      [-7, -3, 0],
      [-1, 2, -5],
    ];
    const a = spectrogramImage(matrix);
    const b = spectrogramImage(matrix.map((row) => row.slice()));
    expect(Array.from(a.data)).toEqual(Array.from(b.data));
  });

  it("uses a fixed color scale, independent of the rest of the matrix", () => {
    const quiet = spectrogramImage(fill(2, 2, -4));
    const loudNeighbour = spectrogramImage([[-4, LOG_MAX], [-4, LOG_MAX]]);
    // same value → same color even though the second render has hot bins
    expect(pixel(loudNeighbour, 0, 1)).toEqual(pixel(quiet, 0, 0));
  });

  it("puts low frequencies at the bottom", () => {
    // single frame: bin 0 hot, everything above silent
    const img = spectrogramImage([[LOG_MAX, LOG_MIN, LOG_MIN, LOG_MIN]]);
    const bottom = pixel(img, 0, img.height - 1);
    const top = pixel(img, 0, 0);
    const brightness = (px: number[]) => px[0] + px[1] + px[2];
    expect(brightness(bottom)).toBeGreaterThan(brightness(top));
  });

  it("maps louder bins to brighter pixels", () => {
    const img = spectrogramImage([[-7, -4, -1, 2]]);
    const brightness = (y: number) => {
      const px = pixel(img, 0, y);
      return px[0] + px[1] + px[2];
    };
    // bins run bottom-up: y=3 is bin 0 (quietest), y=0 is bin 3 (loudest)
    expect(brightness(2)).toBeGreaterThan(brightness(3));
    expect(brightness(1)).toBeGreaterThan(brightness(2));
    expect(brightness(0)).toBeGreaterThan(brightness(1));
  });

  it("clamps values outside the scale instead of wrapping", () => {
    const img = spectrogramImage([[LOG_MIN - 100, LOG_MAX + 100]]);
    expect(pixel(img, 0, 1)).toEqual(pixel(spectrogramImage([[LOG_MIN]]), 0, 0));
    expect(pixel(img, 0, 0)).toEqual(pixel(spectrogramImage([[LOG_MAX]]), 0, 0));
  });

  it("handles an empty matrix", () => {
    const img = spectrogramImage([]);
    expect(img.width).toBe(0);
    expect(img.data.length).toBe(0);
  });
});
