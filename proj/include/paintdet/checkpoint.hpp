#pragma once

#include <memory>
#include <string>

#include "paintdet/unet.hpp"

namespace paintdet {

// Checkpoint container: magic "GDCK", u32 version = 1, u64 JSON metadata
// length, UTF-8 JSON metadata (architecture config plus an ordered tensor
// name/shape manifest), then raw little-endian float32 payloads concatenated
// in manifest order.
void save_checkpoint(const std::string& path, UNet& model);
std::unique_ptr<UNet> load_checkpoint(const std::string& path);

}  // namespace paintdet
