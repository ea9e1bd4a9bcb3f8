export * from "./augment.js";
export * from "./captions.js";
export * from "./encoder.js";
export * from "./format.js";
export * from "./image.js";
export * from "./job.js";
export * from "./manifest.js";
export * from "./rng.js";
export * from "./validate.js";
