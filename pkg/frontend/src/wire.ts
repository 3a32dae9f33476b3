// Decoder for the gateway float raster format (see docs/api.md):
// 8-byte magic, uint32 LE height/width, 16-byte layer kind, zlib body.

const MAGIC = "USYNRAS1";

export interface FloatRaster {
  height: number;
  width: number;
  kind: string;
  data: Float32Array;
}

async function inflate(body: Uint8Array): Promise<Uint8Array> {
  // zlib-wrapped deflate; DecompressionStream("deflate") exists in both
  // modern browsers and Node >= 18
  const stream = new Blob([body as BlobPart]).stream().pipeThrough(new DecompressionStream("deflate"));
  const buf = await new Response(stream).arrayBuffer();
  return new Uint8Array(buf);
}

export async function decodeFloatRaster(payload: ArrayBuffer | Uint8Array): Promise<FloatRaster> {
  const bytes = payload instanceof Uint8Array ? payload : new Uint8Array(payload);
  const magic = new TextDecoder("ascii").decode(bytes.subarray(0, 8));
  if (magic !== MAGIC) throw new Error(`bad magic ${JSON.stringify(magic)}`);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const height = view.getUint32(8, true);
  const width = view.getUint32(12, true);
  const kind = new TextDecoder("ascii")
    .decode(bytes.subarray(16, 32))
    .replace(/\0+$/, "");
  const raw = await inflate(bytes.subarray(32));
  if (raw.byteLength !== height * width * 4) {
    throw new Error(`payload is ${raw.byteLength} bytes, expected ${height * width * 4}`);
  }
  const data = new Float32Array(raw.buffer, raw.byteOffset, height * width);
  return { height, width, kind, data: data.slice() };
}
