#pragma once

#include <string>

#include "occudiff/model.hpp"
#include "occudiff/train.hpp"

namespace occudiff {

/// Everything identifying a checkpoint besides the weight bytes.
struct CheckpointMeta {
    UnetConfig arch;
    TrainConfig train;
    int epoch = 0;        // completed epochs
    long global_step = 0;  // completed optimizer steps
};

/// Writes manifest.json (architecture, tensor registry, training config,
/// progress) + weights.bin (f32 little-endian in registry order) into dir;
/// adam.bin (f64 moments + step) is written when adam is non-null.
void save_checkpoint(const std::string& dir, const Denoiser<float>& model,
                     const CheckpointMeta& meta, const AdamState* adam);

CheckpointMeta read_checkpoint_meta(const std::string& dir);

/// Reconstructs the model from the manifest, verifies the tensor registry
/// matches, and loads the weights bit-exactly. Loads the optimizer state too
/// when adam is non-null (missing adam.bin → error in that case).
Denoiser<float> load_checkpoint(const std::string& dir, CheckpointMeta* meta_out = nullptr,
                                AdamState* adam = nullptr);

}  // namespace occudiff
