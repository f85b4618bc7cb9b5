// Copyright 2026 The medcap Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>

#include "medcap/datamodel.hpp"
#include "medcap/modelio/types.hpp"

namespace medcap::modelio {

struct EncodePolicy {
  int max_dimension = 1024;
  int jpeg_quality = 90;
};

/// Loads the record's image. Images whose longest side exceeds
/// policy.max_dimension are downscaled (aspect preserved) and re-encoded as
/// JPEG; JPEG/PNG files within bounds pass through byte-for-byte.
/// Throws ImageDecodeError for empty or undecodable files.
EncodedImage encode_image(const ImageRecord& record, const EncodePolicy& policy = {});
EncodedImage encode_image_bytes(std::span<const std::uint8_t> bytes,
                                const EncodePolicy& policy = {});

/// Target size for a downscale, or the input size when no scaling applies.
std::pair<int, int> scaled_dimensions(int width, int height, int max_dimension);

}  // namespace medcap::modelio
