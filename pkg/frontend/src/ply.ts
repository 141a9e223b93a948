// Parser for the point clouds the cleanup service streams from GET /cloud:
// binary little-endian PLY with float32 x, y, z, an optional float32
// intensity, and the frame label carried in a "comment frame <name>" line.

export interface ParsedCloud {
  frame: string;
  count: number;
  /** xyz-interleaved float32 positions, length 3 * count. */
  positions: Float32Array;
  intensity: Float32Array | null;
}

const END_HEADER = "end_header\n";

function findHeaderEnd(bytes: Uint8Array): number {
  const needle = new TextEncoder().encode(END_HEADER);
  outer: for (let i = 0; i + needle.length <= bytes.length; i++) {
    for (let j = 0; j < needle.length; j++) {
      if (bytes[i + j] !== needle[j]) {
        continue outer;
      }
    }
    return i;
  }
  return -1;
}

export function parsePly(buffer: ArrayBuffer): ParsedCloud {
  const bytes = new Uint8Array(buffer);
  const headerEnd = findHeaderEnd(bytes);
  if (bytes[0] !== 0x70 || bytes[1] !== 0x6c || bytes[2] !== 0x79 || headerEnd < 0) {
    throw new Error("not a PLY file");
  }
  const header = new TextDecoder("ascii").decode(bytes.subarray(0, headerEnd)).split("\n");
  const bodyOffset = headerEnd + END_HEADER.length;

  if (!header.includes("format binary_little_endian 1.0")) {
    throw new Error("only binary little-endian PLY is supported");
  }
  let frame = "world";
  let count: number | null = null;
  const props: string[] = [];
  for (const line of header) {
    if (line.startsWith("comment frame ")) {
      frame = line.slice("comment frame ".length);
    } else if (line.startsWith("element vertex ")) {
      count = parseInt(line.split(" ").pop()!, 10);
    } else if (line.startsWith("element ")) {
      throw new Error(`unsupported PLY element: ${line}`);
    } else if (line.startsWith("property ")) {
      const [, kind, name] = line.split(" ");
      if (kind !== "float") {
        throw new Error(`unsupported PLY property type ${kind}`);
      }
      props.push(name);
    }
  }
  if (count === null || !Number.isFinite(count)) {
    throw new Error("PLY header missing vertex element");
  }
  if (props[0] !== "x" || props[1] !== "y" || props[2] !== "z") {
    throw new Error(`expected x, y, z leading properties, got ${props.join(", ")}`);
  }
  if (buffer.byteLength - bodyOffset < count * props.length * 4) {
    throw new Error("PLY body shorter than header promises");
  }

  // The header length is rarely a multiple of 4, so copy the body out
  // before viewing it as float32 (typed arrays require aligned offsets).
  const body = new Float32Array(buffer.slice(bodyOffset, bodyOffset + count * props.length * 4));
  const stride = props.length;
  const positions = new Float32Array(count * 3);
  for (let i = 0; i < count; i++) {
    positions[3 * i] = body[stride * i];
    positions[3 * i + 1] = body[stride * i + 1];
    positions[3 * i + 2] = body[stride * i + 2];
  }
  let intensity: Float32Array | null = null;
  const intensityCol = props.indexOf("intensity");
  if (intensityCol >= 0) {
    intensity = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      intensity[i] = body[stride * i + intensityCol];
    }
  }
  return { frame, count, positions, intensity };
}
