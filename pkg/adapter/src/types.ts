/** Shared configuration and wire-facing types. */

export type BackboneName = "vit_b" | "vit_l" | "vit_h";

/** Frozen feature-extractor geometry per backbone size. */
export interface BackboneSpec {
    name: BackboneName;
    featureDim: number;
    gridSize: number;
}

export const BACKBONES: Record<BackboneName, BackboneSpec> = {
    vit_b: { name: "vit_b", featureDim: 16, gridSize: 32 },
    vit_l: { name: "vit_l", featureDim: 24, gridSize: 32 },
    vit_h: { name: "vit_h", featureDim: 32, gridSize: 32 },
};

export interface AdapterConfig {
    checkpointPath?: string;
    backbone: BackboneName;
    device: "cpu";
    embeddingCacheDir?: string;
}

export interface FinetuneConfig {
    learningRate: number;
    epochs: number;
    /** Plateau patience in epochs; 0 stops at the first non-improving epoch. */
    patienceEpochs: number;
    /** Validation-dice improvements at or below this do not reset patience. */
    minDelta: number;
    /** Images are normalized to channels x height x width before encoding. */
    inputResize: [number, number, number];
    /** Update the prompt-feature gains alongside the decoder heads. */
    trainPromptEncoder: boolean;
    /** Apply random shift/scale to the derived box prompts as augmentation. */
    augmentPrompts: boolean;
    /** Also feed the foreground-point feature during fine-tuning. */
    usePointPrompt: boolean;
    seed: number;
}

export const DEFAULT_FINETUNE: FinetuneConfig = {
    learningRate: 1e-5,
    epochs: 100,
    patienceEpochs: 5,
    minDelta: 1e-3,
    inputResize: [3, 1024, 1024],
    trainPromptEncoder: false,
    augmentPrompts: false,
    usePointPrompt: false,
    seed: 0,
};

/** One line of the tasks JSONL file. */
export interface TaskPrompt {
    point: [number, number];
    point_label: number;
    box: [number, number, number, number];
}

export interface TaskRecord {
    image_id: string;
    image_path: string;
    prompt?: TaskPrompt;
}

/** One entry of the dataset manifest JSON produced by the harness. */
export interface ManifestEntry {
    image_id: string;
    image_path: string;
    mask_path: string;
    lesion_class: string;
    width: number;
    height: number;
    empty_mask: boolean;
}
