#pragma once

#include "tcdrguard/tensor.hpp"

#include <map>
#include <string>

namespace tcdr::model {

// Minimal safetensors reader/writer (F32 tensors only): 8-byte little-endian
// header length, JSON header with per-tensor dtype/shape/offsets, raw data.
void save_safetensors(const std::string& path, const std::map<std::string, const Mat*>& tensors);
std::map<std::string, Mat> load_safetensors(const std::string& path);

} // namespace tcdr::model
