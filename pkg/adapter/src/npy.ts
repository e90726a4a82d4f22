/**
 * Minimal NPY writer/reader: format version 1.0, little-endian float32,
 * C-order — exactly what the heatmap toolkit's interchange expects.
 */

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');

export function encodeNpy(data: Float32Array | number[], shape: number[]): Buffer {
    const values = data instanceof Float32Array ? data : Float32Array.from(data);
    const count = shape.reduce((a, b) => a * b, 1);
    if (values.length !== count) {
        throw new Error(`data length ${values.length} does not match shape (${shape.join(', ')})`);
    }
    const shapeRepr = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(', ')})`;
    let header = `{'descr': '<f4', 'fortran_order': False, 'shape': ${shapeRepr}, }`;
    // total header size (magic + version + length field + dict) pads to 64
    const unpadded = MAGIC.length + 2 + 2 + header.length + 1;
    const padding = (64 - (unpadded % 64)) % 64;
    header = header + ' '.repeat(padding) + '\n';

    const head = Buffer.alloc(MAGIC.length + 2 + 2 + header.length);
    MAGIC.copy(head, 0);
    head[6] = 1; // major version
    head[7] = 0; // minor version
    head.writeUInt16LE(header.length, 8);
    head.write(header, 10, 'latin1');

    const body = Buffer.alloc(values.length * 4);
    for (let i = 0; i < values.length; i++) {
        body.writeFloatLE(values[i], i * 4);
    }
    return Buffer.concat([head, body]);
}

export interface NpyArray {
    shape: number[];
    data: Float32Array;
}

export function decodeNpy(buf: Buffer): NpyArray {
    if (!buf.subarray(0, 6).equals(MAGIC)) {
        throw new Error('not an NPY file');
    }
    if (buf[6] !== 1 || buf[7] !== 0) {
        throw new Error(`unsupported NPY version ${buf[6]}.${buf[7]}`);
    }
    const headerLen = buf.readUInt16LE(8);
    const header = buf.subarray(10, 10 + headerLen).toString('latin1');
    if (!header.includes("'descr': '<f4'")) {
        throw new Error(`unsupported dtype in header: ${header}`);
    }
    if (!header.includes("'fortran_order': False")) {
        throw new Error('fortran-order arrays are not supported');
    }
    const match = header.match(/'shape':\s*\(([^)]*)\)/);
    if (!match) {
        throw new Error(`cannot parse shape from header: ${header}`);
    }
    const shape = match[1]
        .split(',')
        .map((s) => s.trim())
        .filter((s) => s.length > 0)
        .map(Number);
    const count = shape.reduce((a, b) => a * b, 1);
    const body = buf.subarray(10 + headerLen);
    const data = new Float32Array(count);
    for (let i = 0; i < count; i++) {
        data[i] = body.readFloatLE(i * 4);
    }
    return { shape, data };
}
