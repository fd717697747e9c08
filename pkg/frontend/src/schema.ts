/**
 * Frame schema validation for the relisten wire protocol.
 *
 * A frame is one JSON text message:
 *
 *   {"seq": 0, "t_ms": 1000, "blendshapes": {<52 canonical keys>},
 *    "jaw": {"x": 0, "y": 0, "z": 0}, "head": {"x": 0, "y": 0, "z": 0}}
 *
 * Validation is strict: exact key sets, canonical blendshape order,
 * weights in [0, 1], Euler angles in (-pi, pi], integer seq, finite t_ms.
 */

export const ARKIT_BLENDSHAPE_NAMES: readonly string[] = [
  "browDownLeft",
  "browDownRight",
  "browInnerUp",
  "browOuterUpLeft",
  "browOuterUpRight",
  "cheekPuff",
  "cheekSquintLeft",
  "cheekSquintRight",
  "eyeBlinkLeft",
  "eyeBlinkRight",
  "eyeLookDownLeft",
  "eyeLookDownRight",
  "eyeLookInLeft",
  "eyeLookInRight",
  "eyeLookOutLeft",
  "eyeLookOutRight",
  "eyeLookUpLeft",
  "eyeLookUpRight",
  "eyeSquintLeft",
  "eyeSquintRight",
  "eyeWideLeft",
  "eyeWideRight",
  "jawForward",
  "jawLeft",
  "jawOpen",
  "jawRight",
  "mouthClose",
  "mouthDimpleLeft",
  "mouthDimpleRight",
  "mouthFrownLeft",
  "mouthFrownRight",
  "mouthFunnel",
  "mouthLeft",
  "mouthLowerDownLeft",
  "mouthLowerDownRight",
  "mouthPressLeft",
  "mouthPressRight",
  "mouthPucker",
  "mouthRight",
  "mouthRollLower",
  "mouthRollUpper",
  "mouthShrugLower",
  "mouthShrugUpper",
  "mouthSmileLeft",
  "mouthSmileRight",
  "mouthStretchLeft",
  "mouthStretchRight",
  "mouthUpperUpLeft",
  "mouthUpperUpRight",
  "noseSneerLeft",
  "noseSneerRight",
  "tongueOut",
];

export const NUM_BLENDSHAPES = ARKIT_BLENDSHAPE_NAMES.length;

export interface Euler {
  x: number;
  y: number;
  z: number;
}

export interface FrameData {
  seq: number;
  t_ms: number;
  blendshapes: Record<string, number>;
  jaw: Euler;
  head: Euler;
}

export interface ValidationResult {
  ok: boolean;
  errors: string[];
  frame?: FrameData;
}

const TOP_KEYS = ["seq", "t_ms", "blendshapes", "jaw", "head"];
const EULER_KEYS = ["x", "y", "z"];

function isPlainObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function checkEuler(v: unknown, label: string, errors: string[]): Euler | null {
  if (!isPlainObject(v)) {
    errors.push(`${label} is not an object`);
    return null;
  }
  const keys = Object.keys(v);
  if (keys.length !== 3 || EULER_KEYS.some((k) => !(k in v))) {
    errors.push(`${label} keys ${JSON.stringify(keys)} != [x, y, z]`);
    return null;
  }
  const out: Record<string, number> = {};
  for (const k of EULER_KEYS) {
    const a = v[k];
    if (typeof a !== "number" || !Number.isFinite(a)) {
      errors.push(`${label}.${k} is not a finite number`);
      return null;
    }
    if (a <= -Math.PI || a > Math.PI) {
      errors.push(`${label}.${k} = ${a} outside (-pi, pi]`);
      return null;
    }
    out[k] = a;
  }
  return out as unknown as Euler;
}

/** Validate one decoded JSON document against the frame schema. */
export function validateFrame(raw: unknown): ValidationResult {
  const errors: string[] = [];
  if (!isPlainObject(raw)) {
    return { ok: false, errors: ["frame is not a JSON object"] };
  }

  const topKeys = Object.keys(raw);
  const missing = TOP_KEYS.filter((k) => !(k in raw));
  const extra = topKeys.filter((k) => !TOP_KEYS.includes(k));
  if (missing.length > 0) errors.push(`missing keys: ${missing.join(", ")}`);
  if (extra.length > 0) errors.push(`unexpected keys: ${extra.join(", ")}`);
  if (errors.length > 0) return { ok: false, errors };

  const seq = raw["seq"];
  if (typeof seq !== "number" || !Number.isInteger(seq) || seq < 0) {
    errors.push(`seq = ${JSON.stringify(seq)} is not a non-negative integer`);
  }
  const tMs = raw["t_ms"];
  if (typeof tMs !== "number" || !Number.isFinite(tMs)) {
    errors.push(`t_ms = ${JSON.stringify(tMs)} is not a finite number`);
  }

  let blendshapes: Record<string, number> | null = null;
  const bs = raw["blendshapes"];
  if (!isPlainObject(bs)) {
    errors.push("blendshapes is not an object");
  } else {
    const keys = Object.keys(bs);
    if (keys.length !== NUM_BLENDSHAPES) {
      errors.push(`blendshapes has ${keys.length} keys, expected ${NUM_BLENDSHAPES}`);
    } else {
      for (let i = 0; i < NUM_BLENDSHAPES; i++) {
        if (keys[i] !== ARKIT_BLENDSHAPE_NAMES[i]) {
          errors.push(
            `blendshape key ${i} is ${JSON.stringify(keys[i])}, ` +
              `expected ${JSON.stringify(ARKIT_BLENDSHAPE_NAMES[i])}`,
          );
          break;
        }
      }
    }
    if (errors.length === 0) {
      blendshapes = {};
      for (const k of keys) {
        const w = bs[k];
        if (typeof w !== "number" || !Number.isFinite(w) || w < 0 || w > 1) {
          errors.push(`weight ${k} = ${JSON.stringify(w)} outside [0, 1]`);
          blendshapes = null;
          break;
        }
        blendshapes[k] = w;
      }
    }
  }

  const jaw = checkEuler(raw["jaw"], "jaw", errors);
  const head = checkEuler(raw["head"], "head", errors);

  if (errors.length > 0 || blendshapes === null || jaw === null || head === null) {
    return { ok: false, errors };
  }
  return {
    ok: true,
    errors,
    frame: { seq: seq as number, t_ms: tMs as number, blendshapes, jaw, head },
  };
}

/** Parse a text message and validate it; JSON errors count as violations. */
export function validateMessage(text: string): ValidationResult {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    return { ok: false, errors: [`not valid JSON: ${(e as Error).message}`] };
  }
  return validateFrame(doc);
}
