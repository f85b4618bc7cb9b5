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

#include "medcap/modelio/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"

namespace medcap::modelio {

namespace {

std::optional<MediaType> sniff(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return MediaType::kJpeg;
  }
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= sizeof(kPng) && std::equal(std::begin(kPng), std::end(kPng), bytes.begin())) {
    return MediaType::kPng;
  }
  return std::nullopt;
}

std::vector<std::uint8_t> encode(const cv::Mat& image, MediaType type, int jpeg_quality) {
  std::vector<std::uint8_t> out;
  const bool ok = type == MediaType::kJpeg
                      ? cv::imencode(".jpg", image, out, {cv::IMWRITE_JPEG_QUALITY, jpeg_quality})
                      : cv::imencode(".png", image, out);
  if (!ok) throw ImageDecodeError("image re-encode failed");
  return out;
}

}  // namespace

std::pair<int, int> scaled_dimensions(int width, int height, int max_dimension) {
  const int longest = std::max(width, height);
  if (longest <= max_dimension) return {width, height};
  const auto scale = [&](int side) {
    const long long v = (static_cast<long long>(side) * max_dimension + longest / 2) / longest;
    return static_cast<int>(std::max(1LL, v));
  };
  return width >= height ? std::pair{max_dimension, scale(height)}
                         : std::pair{scale(width), max_dimension};
}

EncodedImage encode_image_bytes(std::span<const std::uint8_t> bytes, const EncodePolicy& policy) {
  if (bytes.empty()) throw ImageDecodeError("empty image file");
  cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                 const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat image;
  try {
    image = cv::imdecode(buffer, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw ImageDecodeError(std::string("image decode failed: ") + e.what());
  }
  if (image.empty()) throw ImageDecodeError("image is not decodable");

  EncodedImage encoded;
  encoded.source_sha256 = sha256_hex(bytes);
  const auto [w, h] = scaled_dimensions(image.cols, image.rows, policy.max_dimension);
  if (w != image.cols || h != image.rows) {
    cv::Mat resized;
    cv::resize(image, resized, cv::Size(w, h), 0, 0, cv::INTER_AREA);
    encoded.media_type = MediaType::kJpeg;
    encoded.base64_payload = base64_encode(encode(resized, MediaType::kJpeg, policy.jpeg_quality));
    encoded.resized_to = std::pair{w, h};
    return encoded;
  }
  if (auto type = sniff(bytes)) {
    encoded.media_type = *type;
    encoded.base64_payload = base64_encode(bytes);
    return encoded;
  }
  // Other decodable formats (bmp, tiff, ...) become lossless PNG.
  encoded.media_type = MediaType::kPng;
  encoded.base64_payload = base64_encode(encode(image, MediaType::kPng, policy.jpeg_quality));
  return encoded;
}

EncodedImage encode_image(const ImageRecord& record, const EncodePolicy& policy) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(record.image_path);
  } catch (const IoError& e) {
    throw ImageDecodeError(e.what());
  }
  return encode_image_bytes(bytes, policy);
}

}  // namespace medcap::modelio
