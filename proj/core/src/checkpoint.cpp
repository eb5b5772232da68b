#include "conrad/checkpoint.hpp"

#include "conrad/io.hpp"

namespace conrad {

namespace {

void append_vector(std::string& out, const std::vector<float>& v) {
  append_u64(out, v.size());
  append_f32(out, v);
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    const auto v = load_u32(bytes_, pos_);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    const auto v = load_u64(bytes_, pos_);
    pos_ += 8;
    return v;
  }
  std::string text(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::uint64_t n) {
    if (n > (bytes_.size() - pos_) / 4) truncated();
    std::vector<float> v(n);
    load_f32(bytes_, pos_, v);
    pos_ += 4 * n;
    return v;
  }
  std::vector<float> vector() { return floats(u64()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) truncated();
  }
  [[noreturn]] static void truncated() {
    throw FormatError(FormatError::Kind::kTruncated, "checkpoint is truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out = "CRAD";
  append_u32(out, kCheckpointVersion);
  append_u64(out, c.config_json.size());
  out += c.config_json;
  append_u64(out, c.step);
  append_vector(out, c.params);
  append_u32(out, static_cast<std::uint32_t>(c.optimizer));
  append_u64(out, c.optimizer_state.step);
  append_vector(out, c.optimizer_state.m);
  append_vector(out, c.optimizer_state.v);
  append_vector(out, c.optimizer_state.n);
  append_vector(out, c.optimizer_state.prev_grad);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw FormatError(FormatError::Kind::kTruncated, "checkpoint is truncated");
  if (bytes.compare(0, 4, "CRAD") != 0) throw FormatError(FormatError::Kind::kBadMagic, "not a checkpoint (bad magic)");
  Cursor cur(bytes);
  cur.text(4);
  const std::uint32_t version = cur.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                               " is not supported (expected " +
                                                               std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.config_json = cur.text(cur.u64());
  c.step = cur.u64();
  c.params = cur.vector();
  const std::uint32_t kind = cur.u32();
  if (kind > static_cast<std::uint32_t>(OptimizerKind::kAdam)) {
    throw FormatError(FormatError::Kind::kMalformed, "unknown optimizer kind in checkpoint");
  }
  c.optimizer = static_cast<OptimizerKind>(kind);
  c.optimizer_state.step = cur.u64();
  c.optimizer_state.m = cur.vector();
  c.optimizer_state.v = cur.vector();
  c.optimizer_state.n = cur.vector();
  c.optimizer_state.prev_grad = cur.vector();
  if (!cur.done()) throw FormatError(FormatError::Kind::kMalformed, "trailing bytes after checkpoint");
  try {
    (void)c.config();
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("checkpoint config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace conrad
