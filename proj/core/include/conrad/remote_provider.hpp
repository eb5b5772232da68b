#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/score_provider.hpp"

namespace conrad {

// Wire codec for the sidecar's HTTP JSON protocol. Arrays travel as base64 of
// little-endian f32; image shapes as [H, W, C]. Serialization is compact JSON
// with sorted keys, so identical requests are byte-identical.
namespace wire {

std::string encode_f32(std::span<const float> values);
/// Throws ProviderError(kMalformed) on invalid base64 or a length that is not a
/// multiple of 4 bytes.
std::vector<float> decode_f32(std::string_view base64);

std::string predict_noise_request(const Image& noisy, int t, const std::string& cond_id, const Image* echo_noise);
/// Validates shape against `expected` and finiteness.
Image parse_predict_noise_response(const std::string& body, const Image& expected);

std::string invert_request(const std::vector<Image>& images, const std::string& init_label);
std::string parse_invert_response(const std::string& body);

std::string image_request(const Image& image);
std::vector<float> parse_features_response(const std::string& body);
/// Parses {<key>_b64, shape} where shape is [H, W] or [H, W, 1].
Image parse_map_response(const std::string& body, const std::string& key, int height, int width);

}  // namespace wire

struct RemoteOptions {
  std::string url;  // scheme://host:port
  double timeout_seconds = 120.0;
  std::string cond_id;
  ProviderInfo info;
  /// Sends the injected noise along with the noisy image, for services
  /// running in echo mode.
  bool echo = false;
};

/// HTTP client for all sidecar endpoints. One connection, sequential use.
class SidecarClient {
 public:
  explicit SidecarClient(RemoteOptions options);
  ~SidecarClient();
  SidecarClient(const SidecarClient&) = delete;
  SidecarClient& operator=(const SidecarClient&) = delete;

  const RemoteOptions& options() const { return options_; }

  Image predict_noise(const Image& noisy, int t, const std::string& cond_id, const Image* noise);
  std::string invert(const std::vector<Image>& images, const std::string& init_label);
  std::vector<float> features(const Image& image);
  Image depth(const Image& image);
  Image mask(const Image& image);
  bool healthy();

 private:
  std::string post(const std::string& path, const std::string& body);

  struct Impl;
  RemoteOptions options_;
  std::unique_ptr<Impl> impl_;
};

/// ScoreProvider backed by the sidecar's /v1/predict_noise endpoint.
class RemoteProvider : public ScoreProvider {
 public:
  explicit RemoteProvider(RemoteOptions options);

  ProviderInfo info() const override { return client_.options().info; }
  Image predict_noise(const ScoreQuery& query) override;

 private:
  SidecarClient client_;
};

}  // namespace conrad
