/**
 * Tiny wire codec for the control protocol: messages, bundles, time tags.
 *
 * Big-endian, everything padded to 4 bytes. Must stay bit-compatible with
 * the server codec; both sides are pinned to the golden vectors in
 * fixtures/osc_golden.json.
 */

export interface TimeTag {
  seconds: number; // u32, seconds since 1900-01-01
  fraction: number; // u32, units of 2^-32 s
}

export const IMMEDIATE: TimeTag = { seconds: 0, fraction: 1 };

export type OscArg =
  | { tag: "i"; value: number }
  | { tag: "f"; value: number }
  | { tag: "s"; value: string }
  | { tag: "b"; value: Uint8Array }
  | { tag: "t"; value: TimeTag };

export interface OscMessage {
  kind: "message";
  address: string;
  args: OscArg[];
}

export interface OscBundle {
  kind: "bundle";
  when: TimeTag;
  elements: OscPacket[];
}

export type OscPacket = OscMessage | OscBundle;

export const oscInt = (value: number): OscArg => ({ tag: "i", value: value | 0 });
export const oscFloat = (value: number): OscArg => ({ tag: "f", value });
export const oscString = (value: string): OscArg => ({ tag: "s", value });
export const oscBlob = (value: Uint8Array): OscArg => ({ tag: "b", value });
export const oscTime = (value: TimeTag): OscArg => ({ tag: "t", value });

const BUNDLE_MAGIC = "#bundle";

export function timeTagFromSeconds(t: number): TimeTag {
  if (!(t >= 0) || t >= 2 ** 32) throw new Error(`time out of range: ${t}`);
  const seconds = Math.floor(t);
  let fraction = Math.floor((t - seconds) * 2 ** 32);
  if (fraction > 0xffffffff) fraction = 0xffffffff;
  if (seconds === 0 && fraction === 1) fraction = 2; // reserved value
  return { seconds, fraction };
}

export function timeTagToSeconds(tt: TimeTag): number {
  return tt.seconds + tt.fraction / 2 ** 32;
}

export function isImmediate(tt: TimeTag): boolean {
  return tt.seconds === 0 && tt.fraction === 1;
}

// ----------------------------------------------------------------- encode

function paddedStringBytes(s: string): Uint8Array {
  if (s.includes("\0")) throw new Error("string contains NUL");
  const raw = new TextEncoder().encode(s);
  const len = raw.length + 1;
  const out = new Uint8Array(len + ((4 - (len % 4)) % 4));
  out.set(raw);
  return out;
}

function checkAddress(address: string): void {
  if (!address.startsWith("/") || /\s|\0/.test(address)) {
    throw new Error(`bad address: ${address}`);
  }
}

export function encodeMessage(address: string, args: OscArg[] = []): Uint8Array {
  checkAddress(address);
  const parts: Uint8Array[] = [paddedStringBytes(address)];
  let tags = ",";
  const payloads: Uint8Array[] = [];
  for (const arg of args) {
    tags += arg.tag;
    if (arg.tag === "i") {
      const b = new Uint8Array(4);
      new DataView(b.buffer).setInt32(0, arg.value, false);
      payloads.push(b);
    } else if (arg.tag === "f") {
      const b = new Uint8Array(4);
      new DataView(b.buffer).setFloat32(0, arg.value, false);
      payloads.push(b);
    } else if (arg.tag === "s") {
      payloads.push(paddedStringBytes(arg.value));
    } else if (arg.tag === "b") {
      const pad = (4 - (arg.value.length % 4)) % 4;
      const b = new Uint8Array(4 + arg.value.length + pad);
      new DataView(b.buffer).setInt32(0, arg.value.length, false);
      b.set(arg.value, 4);
      payloads.push(b);
    } else {
      payloads.push(encodeTimeTag(arg.value));
    }
  }
  parts.push(paddedStringBytes(tags), ...payloads);
  return concat(parts);
}

function encodeTimeTag(tt: TimeTag): Uint8Array {
  const b = new Uint8Array(8);
  const view = new DataView(b.buffer);
  view.setUint32(0, tt.seconds, false);
  view.setUint32(4, tt.fraction, false);
  return b;
}

export function encodeBundle(when: TimeTag, elements: Uint8Array[]): Uint8Array {
  const parts: Uint8Array[] = [paddedStringBytes(BUNDLE_MAGIC), encodeTimeTag(when)];
  for (const el of elements) {
    const size = new Uint8Array(4);
    new DataView(size.buffer).setInt32(0, el.length, false);
    parts.push(size, el);
  }
  return concat(parts);
}

export function encodePacket(packet: OscPacket): Uint8Array {
  if (packet.kind === "message") return encodeMessage(packet.address, packet.args);
  return encodeBundle(packet.when, packet.elements.map(encodePacket));
}

function concat(parts: Uint8Array[]): Uint8Array {
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

// ----------------------------------------------------------------- decode

class Reader {
  pos = 0;
  constructor(
    readonly bytes: Uint8Array,
    readonly view: DataView,
  ) {}

  remaining(): number {
    return this.bytes.length - this.pos;
  }

  take(n: number): number {
    if (n < 0 || this.remaining() < n) throw new Error("truncated packet");
    const at = this.pos;
    this.pos += n;
    return at;
  }

  string(): string {
    const start = this.pos;
    let end = start;
    while (end < this.bytes.length && this.bytes[end] !== 0) end++;
    if (end >= this.bytes.length) throw new Error("unterminated string");
    const value = new TextDecoder().decode(this.bytes.subarray(start, end));
    this.pos = start + (Math.floor((end - start) / 4) + 1) * 4;
    if (this.pos > this.bytes.length) throw new Error("string padding overrun");
    return value;
  }
}

export function decodePacket(data: Uint8Array | ArrayBuffer): OscPacket {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (bytes.length === 0 || bytes.length % 4 !== 0) {
    throw new Error(`bad packet length ${bytes.length}`);
  }
  const reader = new Reader(bytes, view);
  const packet = decodeAt(reader, 0);
  if (reader.remaining() !== 0) throw new Error("trailing bytes");
  return packet;
}

function decodeAt(r: Reader, depth: number): OscPacket {
  if (depth > 16) throw new Error("nesting too deep");
  const isBundle =
    r.remaining() >= 8 &&
    new TextDecoder().decode(r.bytes.subarray(r.pos, r.pos + 7)) === BUNDLE_MAGIC &&
    r.bytes[r.pos + 7] === 0;
  if (isBundle) return decodeBundle(r, depth);
  return decodeMessage(r);
}

function decodeMessage(r: Reader): OscMessage {
  const address = r.string();
  checkAddress(address);
  const tags = r.string();
  if (!tags.startsWith(",")) throw new Error("missing type tags");
  const args: OscArg[] = [];
  for (const tag of tags.slice(1)) {
    if (tag === "i") {
      args.push(oscInt(r.view.getInt32(r.take(4), false)));
    } else if (tag === "f") {
      args.push(oscFloat(r.view.getFloat32(r.take(4), false)));
    } else if (tag === "s") {
      args.push(oscString(r.string()));
    } else if (tag === "b") {
      const n = r.view.getInt32(r.take(4), false);
      if (n < 0) throw new Error("negative blob size");
      const at = r.take(n);
      r.take((4 - (n % 4)) % 4);
      args.push(oscBlob(r.bytes.slice(at, at + n)));
    } else if (tag === "t") {
      const at = r.take(8);
      args.push(
        oscTime({
          seconds: r.view.getUint32(at, false),
          fraction: r.view.getUint32(at + 4, false),
        }),
      );
    } else {
      throw new Error(`unsupported type tag '${tag}'`);
    }
  }
  return { kind: "message", address, args };
}

function decodeBundle(r: Reader, depth: number): OscBundle {
  r.take(8); // magic
  const at = r.take(8);
  const when: TimeTag = {
    seconds: r.view.getUint32(at, false),
    fraction: r.view.getUint32(at + 4, false),
  };
  const elements: OscPacket[] = [];
  while (r.remaining() > 0) {
    const size = r.view.getInt32(r.take(4), false);
    if (size < 0 || size % 4 !== 0) throw new Error(`bad element size ${size}`);
    const start = r.take(size);
    const subBytes = r.bytes.subarray(start, start + size);
    const subReader = new Reader(
      subBytes,
      new DataView(subBytes.buffer, subBytes.byteOffset, subBytes.byteLength),
    );
    elements.push(decodeAt(subReader, depth + 1));
    if (subReader.remaining() !== 0) throw new Error("trailing bytes in element");
  }
  return { kind: "bundle", when, elements };
}

export function toHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function fromHex(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}
