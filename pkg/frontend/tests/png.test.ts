import { inflateSync } from "node:zlib";
import { describe, expect, it } from "vitest";
import { base64ToBytes, bytesToBase64, crc32, encodeGrayPng } from "../src/png.js";

function readU32(bytes: Uint8Array, at: number): number {
  return ((bytes[at] << 24) | (bytes[at + 1] << 16) | (bytes[at + 2] << 8) | bytes[at + 3]) >>> 0;
}

/** Independent minimal PNG parser used as the decode oracle. */
function decode(bytes: Uint8Array): { width: number; height: number; gray: Uint8Array } {
  expect(Array.from(bytes.subarray(0, 8))).toEqual([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
  let pos = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const len = readU32(bytes, pos);
    const type = String.fromCharCode(...bytes.subarray(pos + 4, pos + 8));
    const body = bytes.subarray(pos + 8, pos + 8 + len);
    const stored = readU32(bytes, pos + 8 + len);
    expect(crc32(bytes.subarray(pos + 4, pos + 8 + len))).toBe(stored);
    if (type === "IHDR") {
      width = readU32(body, 0);
      height = readU32(body, 4);
      expect(body[8]).toBe(8); // bit depth
      expect(body[9]).toBe(0); // grayscale
    } else if (type === "IDAT") {
      idat.push(body);
    }
    pos += 12 + len;
  }
  const raw = inflateSync(Buffer.concat(idat.map((c) => Buffer.from(c))));
  const gray = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    expect(raw[y * (width + 1)]).toBe(0); // filter none
    gray.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, gray };
}

describe("encodeGrayPng", () => {
  it("round-trips pixels through a real inflate", () => {
    const gray = new Uint8Array(32 * 20).map((_, i) => (i * 7) % 256);
    const png = encodeGrayPng(gray, 32, 20);
    const decoded = decode(png);
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(20);
    expect(decoded.gray).toEqual(gray);
  });

  it("produces identical bytes for identical pixels", () => {
    const gray = new Uint8Array(64 * 64).fill(255);
    gray[100] = 0;
    expect(encodeGrayPng(gray, 64, 64)).toEqual(encodeGrayPng(gray, 64, 64));
  });

  it("handles images larger than one stored zlib block", () => {
    const side = 300; // 300*301 > 65535 raw bytes
    const gray = new Uint8Array(side * side).map((_, i) => i % 251);
    const decoded = decode(encodeGrayPng(gray, side, side));
    expect(decoded.gray).toEqual(gray);
  });

  it("rejects mismatched buffer sizes", () => {
    expect(() => encodeGrayPng(new Uint8Array(10), 4, 4)).toThrow();
  });
});

describe("base64 helpers", () => {
  it("round-trip arbitrary bytes", () => {
    const bytes = new Uint8Array(257).map((_, i) => i % 256);
    expect(base64ToBytes(bytesToBase64(bytes))).toEqual(bytes);
  });
});
