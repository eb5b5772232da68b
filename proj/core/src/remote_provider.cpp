#include "conrad/remote_provider.hpp"

#include <cmath>
#include <cstring>

#include <httplib.h>
#include <sodium.h>

#include <json.hpp>

#include "conrad/io.hpp"

namespace conrad {

using json = nlohmann::json;

namespace wire {

namespace {

ProviderError malformed(const std::string& what) { return ProviderError(ProviderError::Kind::kMalformed, what); }

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw malformed(std::string("response is not valid JSON: ") + e.what());
  }
}

template <typename V>
V field(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw malformed(std::string("response lacks '") + key + "'");
  try {
    return doc.at(key).get<V>();
  } catch (const json::exception&) {
    throw malformed(std::string("response field '") + key + "' has the wrong type");
  }
}

json image_shape(const Image& image) { return json::array({image.height, image.width, image.channels}); }

void check_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw ProviderError(ProviderError::Kind::kNonFinite, "response contains non-finite values");
  }
}

}  // namespace

std::string encode_f32(std::span<const float> values) {
  std::string bytes;
  append_f32(bytes, values);
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<float> decode_f32(std::string_view base64) {
  std::string bytes(base64.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(bytes.data()), bytes.size(), base64.data(), base64.size(),
                        nullptr, &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != base64.data() + base64.size()) {
    throw malformed("payload is not valid base64");
  }
  if (len % 4 != 0) throw malformed("payload length is not a whole number of f32 values");
  bytes.resize(len);
  std::vector<float> out(len / 4);
  load_f32(bytes, 0, out);
  return out;
}

std::string predict_noise_request(const Image& noisy, int t, const std::string& cond_id, const Image* echo_noise) {
  json doc = {{"image_b64", encode_f32(noisy.data)}, {"shape", image_shape(noisy)}, {"t", t}, {"cond_id", cond_id}};
  if (echo_noise) doc["epsilon_b64"] = encode_f32(echo_noise->data);
  return doc.dump();
}

Image parse_predict_noise_response(const std::string& body, const Image& expected) {
  const json doc = parse_body(body);
  const auto shape = field<std::vector<long long>>(doc, "shape");
  const auto values = decode_f32(field<std::string>(doc, "epsilon_b64"));
  if (shape.size() != 3 || shape[0] != expected.height || shape[1] != expected.width ||
      shape[2] != expected.channels || values.size() != expected.size()) {
    throw ProviderError(ProviderError::Kind::kShapeMismatch, "noise prediction shape does not match the request");
  }
  check_finite(values);
  Image out(expected.height, expected.width, expected.channels);
  out.data = values;
  return out;
}

std::string invert_request(const std::vector<Image>& images, const std::string& init_label) {
  json list = json::array();
  for (const auto& img : images) list.push_back(encode_f32(img.data));
  json shapes = json::array();
  for (const auto& img : images) shapes.push_back(image_shape(img));
  return json{{"images_b64", list}, {"shapes", shapes}, {"init_label", init_label}}.dump();
}

std::string parse_invert_response(const std::string& body) {
  const auto id = field<std::string>(parse_body(body), "cond_id");
  if (id.empty()) throw malformed("empty cond_id");
  return id;
}

std::string image_request(const Image& image) {
  return json{{"image_b64", encode_f32(image.data)}, {"shape", image_shape(image)}}.dump();
}

std::vector<float> parse_features_response(const std::string& body) {
  const json doc = parse_body(body);
  const auto dim = field<long long>(doc, "dim");
  auto values = decode_f32(field<std::string>(doc, "features_b64"));
  if (dim <= 0 || static_cast<std::size_t>(dim) != values.size()) {
    throw ProviderError(ProviderError::Kind::kShapeMismatch, "feature vector length does not match 'dim'");
  }
  check_finite(values);
  return values;
}

Image parse_map_response(const std::string& body, const std::string& key, int height, int width) {
  const json doc = parse_body(body);
  const auto shape = field<std::vector<long long>>(doc, "shape");
  const auto values = decode_f32(field<std::string>(doc, (key + "_b64").c_str()));
  const bool shape_ok = (shape.size() == 2 || (shape.size() == 3 && shape[2] == 1)) && shape[0] == height &&
                        shape[1] == width;
  if (!shape_ok || values.size() != static_cast<std::size_t>(height) * width) {
    throw ProviderError(ProviderError::Kind::kShapeMismatch, key + " map shape does not match the image");
  }
  check_finite(values);
  Image out(height, width, 1);
  out.data = values;
  return out;
}

}  // namespace wire

struct SidecarClient::Impl {
  explicit Impl(const std::string& url) : client(url) {}
  httplib::Client client;
};

SidecarClient::SidecarClient(RemoteOptions options) : options_(std::move(options)) {
  if (options_.url.empty()) throw InvalidArgument("remote provider needs an endpoint URL");
  if (!(options_.timeout_seconds > 0.0)) throw InvalidArgument("remote timeout must be positive");
  if (sodium_init() < 0) throw Error("libsodium failed to initialize");
  impl_ = std::make_unique<Impl>(options_.url);
  if (!impl_->client.is_valid()) throw InvalidArgument("invalid provider URL '" + options_.url + "'");
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  const auto usecs = static_cast<time_t>((options_.timeout_seconds - secs) * 1e6);
  impl_->client.set_connection_timeout(secs, usecs);
  impl_->client.set_read_timeout(secs, usecs);
  impl_->client.set_write_timeout(secs, usecs);
  impl_->client.set_keep_alive(true);
}

SidecarClient::~SidecarClient() = default;

std::string SidecarClient::post(const std::string& path, const std::string& body) {
  auto res = impl_->client.Post(path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = path + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw ProviderError(ProviderError::Kind::kTimeout, what);
    }
    throw ProviderError(ProviderError::Kind::kUnavailable, what);
  }
  if (res->status != 200) {
    throw ProviderError(ProviderError::Kind::kHttp,
                        path + ": HTTP " + std::to_string(res->status) + (res->body.empty() ? "" : " " + res->body));
  }
  return res->body;
}

Image SidecarClient::predict_noise(const Image& noisy, int t, const std::string& cond_id, const Image* noise) {
  const auto body = wire::predict_noise_request(noisy, t, cond_id, options_.echo ? noise : nullptr);
  return wire::parse_predict_noise_response(post("/v1/predict_noise", body), noisy);
}

std::string SidecarClient::invert(const std::vector<Image>& images, const std::string& init_label) {
  if (images.empty()) throw InvalidArgument("inversion needs at least one image");
  return wire::parse_invert_response(post("/v1/invert", wire::invert_request(images, init_label)));
}

std::vector<float> SidecarClient::features(const Image& image) {
  return wire::parse_features_response(post("/v1/features", wire::image_request(image)));
}

Image SidecarClient::depth(const Image& image) {
  return wire::parse_map_response(post("/v1/depth", wire::image_request(image)), "depth", image.height, image.width);
}

Image SidecarClient::mask(const Image& image) {
  return wire::parse_map_response(post("/v1/mask", wire::image_request(image)), "mask", image.height, image.width);
}

bool SidecarClient::healthy() {
  auto res = impl_->client.Get("/v1/health");
  return res && res->status == 200;
}

RemoteProvider::RemoteProvider(RemoteOptions options) : client_(std::move(options)) {}

Image RemoteProvider::predict_noise(const ScoreQuery& query) {
  return client_.predict_noise(query.noisy, query.t, query.cond_id.empty() ? client_.options().cond_id : query.cond_id,
                               query.noise);
}

}  // namespace conrad
