#pragma once

#include <string>
#include <vector>

#include "modforge/tensor.hpp"

namespace modforge {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Flat binary parameter file: magic "MMF1", version u32, count u32, then per
// parameter: name length u16, UTF-8 name, rank u8, dims as u32s, f64 payload.
// All integers and floats little-endian.
void save_checkpoint(const std::vector<NamedParam>& params, const std::string& path);

// Loads a checkpoint into fresh parameter tensors, in file order.
std::vector<NamedParam> load_checkpoint(const std::string& path);

// Copies checkpoint values into an existing parameter set; every name must
// match by position and shape (format error otherwise).
void load_checkpoint_into(std::vector<NamedParam>& params, const std::string& path);

}  // namespace modforge
