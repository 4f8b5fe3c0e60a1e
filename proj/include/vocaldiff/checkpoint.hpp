#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vocaldiff/diffusion.hpp"

namespace vocaldiff {

struct Checkpoint {
    UNetConfig unet;
    TrainConfig train;
    ModelParams params;
    std::uint64_t step = 0;
};

// key=value lines covering every UNetConfig and TrainConfig field.
std::string config_text(const UNetConfig& unet, const TrainConfig& train);
void parse_config_text(const std::string& text, UNetConfig& unet, TrainConfig& train);

// VDIF: "VDIF", u32 version, u32 config length + config text, u32 tensor
// count, tensors (u16 name length, name, u8 ndim, u32 dims, f32 data), u64 step.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace vocaldiff
