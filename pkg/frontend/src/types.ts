/** Shapes of the documents the review service exchanges over /api. */

export type FeatureKind = "landmark" | "outline" | "patch";

export interface RegistryClass {
  class_id: number;
  code: string;
  kind: FeatureKind;
  side: string;
  group: string;
}

export interface RegistryDoc {
  classes: RegistryClass[];
}

export interface ImageRow {
  image_id: string;
  status: string;
  revision: number;
}

export interface ImageListDoc {
  images: ImageRow[];
  total: number;
  page: number;
  page_size: number;
}

export interface PredictedLandmark {
  class_id: number;
  code: string;
  x_px: number;
  y_px: number;
  x_mm: number | null;
  y_mm: number | null;
  confidence: number;
}

export interface PredictedMask {
  class_id: number;
  code: string;
  width: number;
  height: number;
  runs: number[];
  confidence: number;
}

export interface PredictedBox {
  class_id: number;
  box: [number, number, number, number];
}

export interface PredictionDoc {
  schema_version: number;
  image_id: string;
  calibrated: boolean;
  landmarks: PredictedLandmark[];
  masks: PredictedMask[];
  boxes: PredictedBox[];
  missing: string[];
  warnings: string[];
}

/** Geometry attached to an "added" correction; kind must match the class. */
export type AddedGeometry =
  | { kind: "landmark"; point: [number, number] }
  | { kind: "outline"; points: [number, number][] }
  | { kind: "patch"; points: [number, number][] };

export type Correction =
  | { type: "accepted" }
  | { type: "marked_missing" }
  | { type: "moved"; point: [number, number] }
  | { type: "mask_replaced"; width: number; height: number; runs: number[] }
  | { type: "added"; geometry: AddedGeometry };

export interface RecordDoc {
  image_id: string;
  revision: number;
  status: string;
  prediction: PredictionDoc | null;
  corrections: Record<string, Correction>;
  reviewer: string;
}

export interface CorrectionsResponse {
  image_id: string;
  revision: number;
}

export interface FinalizeResponse {
  image_id: string;
  revision: number;
  status: string;
}
