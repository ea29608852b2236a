#include "driftfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "driftfuse/errors.hpp"
#include "driftfuse/feature_io.hpp"

namespace driftfuse {

namespace {

class Writer {
 public:
  template <typename T>
  void u(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u(std::bit_cast<std::uint64_t>(v)); }
  void size(std::size_t n) { u(static_cast<std::uint64_t>(n)); }
  void str(std::string_view s) {
    size(s.size());
    out_.append(s);
  }
  void doubles(std::span<const double> v) {
    size(v.size());
    for (double x : v) f64(x);
  }
  void matrix(const Matrix& m) {
    size(m.rows());
    size(m.cols());
    for (double x : m.values()) f64(x);
  }
  void dense(const DenseLayer& l) {
    matrix(l.weight);
    doubles(l.bias);
  }
  void mlp(const MlpParams& p) {
    u(static_cast<std::uint8_t>(p.activation));
    f64(p.dropout_rate);
    size(p.layers.size());
    for (const auto& l : p.layers) dense(l);
  }
  void structure(const LayerStructure& s) {
    matrix(s.q);
    matrix(s.r);
    matrix(s.weight);
  }
  void rng(const Rng& r) {
    std::ostringstream ss;
    ss << r;
    str(ss.str());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T u() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(u<std::uint64_t>()); }
  std::size_t size() {
    const auto n = u<std::uint64_t>();
    // Every element takes at least one byte, which bounds any honest count.
    if (n > bytes_.size() - pos_) fail("implausible element count");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = size();
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(size());
    need(v.size() * 8);
    for (double& x : v) x = f64();
    return v;
  }
  Matrix matrix() {
    const std::size_t rows = size();
    const std::size_t cols = size();
    if (cols != 0 && rows > (bytes_.size() - pos_) / 8 / cols) fail("matrix larger than file");
    std::vector<double> data(rows * cols);
    for (double& x : data) x = f64();
    return Matrix(rows, cols, std::move(data));
  }
  DenseLayer dense() {
    DenseLayer l;
    l.weight = matrix();
    l.bias = doubles();
    if (l.bias.size() != l.weight.rows()) fail("bias width disagrees with weight rows");
    return l;
  }
  MlpParams mlp() {
    MlpParams p;
    const auto act = u<std::uint8_t>();
    if (act > static_cast<std::uint8_t>(Activation::identity)) fail("unknown activation");
    p.activation = static_cast<Activation>(act);
    p.dropout_rate = f64();
    p.layers.resize(size());
    for (auto& l : p.layers) l = dense();
    return p;
  }
  LayerStructure structure() {
    LayerStructure s;
    s.q = matrix();
    s.r = matrix();
    s.weight = matrix();
    return s;
  }
  Rng rng() {
    std::istringstream ss(str());
    Rng r;
    ss >> r;
    if (!ss) fail("unreadable rng state");
    return r;
  }
  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(FormatErrorKind::bad_record,
                      source_ + ": corrupt checkpoint at byte " + std::to_string(pos_) + ": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw FormatError(FormatErrorKind::truncated, source_ + ": checkpoint truncated");
    }
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const TrainerState& s, std::string_view config_text) {
  Writer w;
  for (char c : kCheckpointMagic) w.u(static_cast<std::uint8_t>(c));
  w.u(kCheckpointVersion);
  w.str(config_text);

  w.mlp(s.model.intrinsic_encoder);
  w.mlp(s.model.domain_encoder);
  w.dense(s.model.intrinsic_classifier);
  w.dense(s.model.domain_classifier);

  w.u(static_cast<std::uint8_t>(s.snapshot.has_value()));
  if (s.snapshot) {
    w.size(s.snapshot->captured_task);
    w.size(s.snapshot->layers.size());
    for (const auto& l : s.snapshot->layers) w.structure(l);
    w.size(s.snapshot->bias_layers.size());
    for (const auto& l : s.snapshot->bias_layers) w.structure(l);
  }

  const auto res = s.reservoir.state();
  w.size(res.capacity);
  w.size(res.feature_dim);
  w.u(res.seen);
  w.u(static_cast<std::uint8_t>(res.source_task.has_value()));
  w.size(res.source_task.value_or(0));
  w.doubles(res.features);
  w.size(res.labels.size());
  for (auto y : res.labels) w.u(y);

  for (const Rng* r : {&s.rng.init, &s.rng.shuffle, &s.rng.dropout, &s.rng.swap, &s.rng.fusion,
                       &s.rng.reservoir}) {
    w.rng(*r);
  }
  w.u(s.global_step);
  w.size(s.tasks_completed);

  const AccuracyMatrix& a = s.accuracy;
  w.size(a.domain_names.size());
  for (const auto& n : a.domain_names) w.str(n);
  w.size(a.train_domains);
  w.size(a.unseen_domains);
  w.size(a.grid.size());
  for (const auto& row : a.grid) w.doubles(row);
  w.doubles(a.stage_pooled);
  w.doubles(a.stage_mean);
  w.doubles(a.stage_acc);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, source + ": not a checkpoint file");
  }
  Reader r(bytes.substr(4), source);
  const auto version = r.u<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::bad_version,
                      source + ": checkpoint version " + std::to_string(version));
  }
  Checkpoint cp;
  cp.config_text = r.str();
  TrainerState& s = cp.state;

  s.model.intrinsic_encoder = r.mlp();
  s.model.domain_encoder = r.mlp();
  s.model.intrinsic_classifier = r.dense();
  s.model.domain_classifier = r.dense();
  try {
    validate(s.model);
  } catch (const ShapeError& e) {
    r.fail(e.what());
  }

  if (r.u<std::uint8_t>()) {
    FusionSnapshot snap;
    snap.captured_task = r.size();
    snap.layers.resize(r.size());
    for (auto& l : snap.layers) l = r.structure();
    snap.bias_layers.resize(r.size());
    for (auto& l : snap.bias_layers) l = r.structure();
    s.snapshot = std::move(snap);
  }

  DomainFeatureReservoir::State res;
  res.capacity = r.size();
  res.feature_dim = r.size();
  res.seen = r.u<std::uint64_t>();
  const bool has_source = r.u<std::uint8_t>() != 0;
  const std::size_t source_task = r.size();
  if (has_source) res.source_task = source_task;
  res.features = r.doubles();
  res.labels.resize(r.size());
  for (auto& y : res.labels) y = r.u<std::uint32_t>();
  if (res.labels.size() > res.capacity || res.features.size() != res.labels.size() * res.feature_dim) {
    r.fail("reservoir sizes disagree");
  }
  s.reservoir = DomainFeatureReservoir::from_state(std::move(res));

  for (Rng* g : {&s.rng.init, &s.rng.shuffle, &s.rng.dropout, &s.rng.swap, &s.rng.fusion,
                 &s.rng.reservoir}) {
    *g = r.rng();
  }
  s.global_step = r.u<std::uint64_t>();
  s.tasks_completed = r.size();

  AccuracyMatrix& a = s.accuracy;
  a.domain_names.resize(r.size());
  for (auto& n : a.domain_names) n = r.str();
  a.train_domains = r.size();
  a.unseen_domains = r.size();
  a.grid.resize(r.size());
  for (auto& row : a.grid) row = r.doubles();
  a.stage_pooled = r.doubles();
  a.stage_mean = r.doubles();
  a.stage_acc = r.doubles();
  if (!r.done()) r.fail("trailing bytes");
  if (a.grid.size() != s.tasks_completed) r.fail("accuracy rows disagree with task count");
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state,
                     std::string_view config_text) {
  write_file_atomic(path, encode_checkpoint(state, config_text));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

}  // namespace driftfuse
