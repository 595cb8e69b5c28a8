#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aigan/models.hpp"
#include "aigan/tensor.hpp"

namespace aigan {

// Checkpoint container. Layout, little-endian throughout:
//   magic "AIGN" | version u32 | tensor count u32
//   per tensor: name_len u16, name bytes, rank u8, dims u32 each,
//               dtype u8 (0 = f32), payload f32
// Round-trips names, shapes and values bit-exactly. Distinct errors for a
// corrupt header, a version mismatch and a truncated payload.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

void save_model(const std::string& path, Model& m);
void save_model(const std::string& path, Generator& g);
void save_model(const std::string& path, Discriminator& d);

// Loads by name into an already-built object; every stored tensor must match
// an existing name and shape, and nothing may be missing.
void load_model(const std::string& path, Model& m);
void load_model(const std::string& path, Generator& g);
void load_model(const std::string& path, Discriminator& d);

} // namespace aigan
