#include "seqcnn/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "seqcnn/keyvalue.hpp"

namespace seqcnn {

namespace {

namespace fs = std::filesystem;

constexpr char kFeatMagic[4] = {'S', 'E', 'Q', 'F'};
constexpr char kLabelMagic[4] = {'S', 'E', 'Q', 'L'};
constexpr char kTensorMagic[4] = {'S', 'E', 'Q', 'T'};
constexpr char kCheckpointMagic[4] = {'S', 'E', 'Q', 'C'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  void magic(const char (&expected)[4]) {
    if (data_.size() < 4) fail(FormatIssue::TruncatedHeader, "truncated header: missing magic");
    if (std::memcmp(data_.data(), expected, 4) != 0) {
      fail(FormatIssue::BadMagic, "bad magic '" + printable(data_.substr(0, 4)) + "', expected '" +
                                      std::string(expected, 4) + "'");
    }
    pos_ = 4;
    const std::uint32_t version = u32();
    if (version != kFormatVersion) {
      fail(FormatIssue::UnsupportedVersion, "unsupported version " + std::to_string(version));
    }
  }

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::string text() {
    const std::uint32_t n = u32();
    return std::string(take(n));
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  /// Switches truncation diagnostics from header to payload.
  void payload(std::size_t expectedBytes) {
    payload_ = true;
    if (remaining() < expectedBytes) {
      fail(FormatIssue::TruncatedPayload, "truncated payload: expected " + std::to_string(expectedBytes) +
                                              " bytes, found " + std::to_string(remaining()));
    }
  }

  void finish() {
    if (remaining() != 0) {
      fail(FormatIssue::TrailingBytes, std::to_string(remaining()) + " unexpected trailing bytes");
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }

  [[noreturn]] void fail(FormatIssue issue, const std::string& message) const {
    throw FormatError(issue, origin_ + ": " + message);
  }

 private:
  static std::string printable(std::string_view s) {
    std::string out;
    for (char c : s) out += (c >= 32 && c < 127) ? c : '?';
    return out;
  }
  void need(std::size_t n) {
    if (remaining() < n) {
      fail(payload_ ? FormatIssue::TruncatedPayload : FormatIssue::TruncatedHeader,
           std::string(payload_ ? "truncated payload" : "truncated header") + " at byte " + std::to_string(pos_));
    }
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::string origin_;
  std::size_t pos_ = 0;
  bool payload_ = false;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw std::invalid_argument(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

std::string to_string(FormatIssue issue) {
  switch (issue) {
    case FormatIssue::Io: return "io";
    case FormatIssue::BadMagic: return "bad magic";
    case FormatIssue::UnsupportedVersion: return "unsupported version";
    case FormatIssue::TruncatedHeader: return "truncated header";
    case FormatIssue::TruncatedPayload: return "truncated payload";
    case FormatIssue::TrailingBytes: return "trailing bytes";
    case FormatIssue::LabelOutOfRange: return "label out of range";
    case FormatIssue::BadHeader: return "bad header";
  }
  return "unknown";
}

std::string read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatIssue::Io, path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatIssue::Io, path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatIssue::Io, path + ": write failed");
}

// --- features ---------------------------------------------------------------

std::string encode_features(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("feature file: expected [T, F], got " + shape_string(features.shape()));
  Writer w;
  w.bytes(kFeatMagic, 4);
  w.u32(kFormatVersion);
  w.u32(checked_u32(features.dim(0), "frame count"));
  w.u32(checked_u32(features.dim(1), "feature dimension"));
  const Tensor f32 = features.cast(DType::F32);
  for (float v : f32.values<float>()) w.f32(v);
  return w.take();
}

Tensor decode_features(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic(kFeatMagic);
  const std::uint32_t t = r.u32();
  const std::uint32_t f = r.u32();
  if (t == 0 || f == 0) r.fail(FormatIssue::BadHeader, "zero frame count or feature dimension");
  const std::size_t n = std::size_t{t} * f;
  r.payload(n * 4);
  Tensor out({t, f}, DType::F32);
  auto v = out.values<float>();
  for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(r.u32());
  r.finish();
  return out;
}

void write_feature_file(const std::string& path, const Tensor& features) {
  write_binary_file(path, encode_features(features));
}

Tensor read_feature_file(const std::string& path) { return decode_features(read_binary_file(path), path); }

// --- labels -----------------------------------------------------------------

std::string encode_labels(std::span<const std::int32_t> labels, std::size_t numStates) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= numStates) {
      throw FormatError(FormatIssue::LabelOutOfRange, "label file: id " + std::to_string(labels[i]) +
                                                          " at frame " + std::to_string(i) + " outside [0, " +
                                                          std::to_string(numStates) + ")");
    }
  }
  Writer w;
  w.bytes(kLabelMagic, 4);
  w.u32(kFormatVersion);
  w.u32(checked_u32(labels.size(), "frame count"));
  w.u32(checked_u32(numStates, "state count"));
  for (auto l : labels) w.u32(static_cast<std::uint32_t>(l));
  return w.take();
}

LabelData decode_labels(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic(kLabelMagic);
  const std::uint32_t t = r.u32();
  const std::uint32_t states = r.u32();
  if (t == 0 || states == 0) r.fail(FormatIssue::BadHeader, "zero frame count or state count");
  r.payload(std::size_t{t} * 4);
  LabelData d;
  d.numStates = states;
  d.labels.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    const auto id = static_cast<std::int32_t>(r.u32());
    if (id < 0 || static_cast<std::uint32_t>(id) >= states) {
      r.fail(FormatIssue::LabelOutOfRange, "label id " + std::to_string(id) + " at frame " + std::to_string(i) +
                                               " outside [0, " + std::to_string(states) + ")");
    }
    d.labels[i] = id;
  }
  r.finish();
  return d;
}

void write_label_file(const std::string& path, std::span<const std::int32_t> labels, std::size_t numStates) {
  write_binary_file(path, encode_labels(labels, numStates));
}

LabelData read_label_file(const std::string& path) { return decode_labels(read_binary_file(path), path); }

// --- tensors ----------------------------------------------------------------

std::string encode_tensor(const Tensor& t) {
  if (t.empty()) throw ShapeError("tensor file: cannot encode an empty tensor");
  Writer w;
  w.bytes(kTensorMagic, 4);
  w.u32(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(t.dtype()));
  w.u8(static_cast<std::uint8_t>(t.rank()));
  w.u16(0);
  for (auto d : t.shape()) w.u32(checked_u32(d, "tensor extent"));
  visit_dtype(t.dtype(), [&]<class T>() {
    for (T v : t.values<T>()) {
      if constexpr (std::same_as<T, float>) {
        w.f32(v);
      } else {
        w.f64(v);
      }
    }
  });
  return w.take();
}

Tensor decode_tensor(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic(kTensorMagic);
  const std::uint8_t dt = r.u8();
  const std::uint8_t rank = r.u8();
  const std::uint16_t reserved = r.u16();
  if (dt > 1) r.fail(FormatIssue::BadHeader, "unknown dtype code " + std::to_string(dt));
  if (rank < 1 || rank > 4) r.fail(FormatIssue::BadHeader, "rank " + std::to_string(rank) + " outside 1..4");
  if (reserved != 0) r.fail(FormatIssue::BadHeader, "reserved header bytes are not zero");
  Shape shape;
  for (int i = 0; i < rank; ++i) {
    shape.push_back(r.u32());
    if (shape.back() == 0) r.fail(FormatIssue::BadHeader, "zero extent");
  }
  const DType dtype = static_cast<DType>(dt);
  const std::size_t n = shape_numel(shape);
  r.payload(n * (dtype == DType::F32 ? 4 : 8));
  Tensor out(shape, dtype);
  visit_dtype(dtype, [&]<class T>() {
    auto v = out.values<T>();
    for (std::size_t i = 0; i < n; ++i) {
      if constexpr (std::same_as<T, float>) {
        v[i] = std::bit_cast<float>(r.u32());
      } else {
        v[i] = std::bit_cast<double>(r.u64());
      }
    }
  });
  r.finish();
  return out;
}

void write_tensor_file(const std::string& path, const Tensor& t) { write_binary_file(path, encode_tensor(t)); }

Tensor read_tensor_file(const std::string& path) { return decode_tensor(read_binary_file(path), path); }

// --- manifests and corpora --------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::string text = [&] {
    try {
      return read_text_file(path);
    } catch (const std::runtime_error&) {
      throw FormatError(FormatIssue::Io, path + ": cannot open manifest");
    }
  }();
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = trimmed.find('\t', start);
      fields.push_back(trim(std::string_view(trimmed).substr(start, tab == std::string::npos ? std::string::npos : tab - start)));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path + ": line " + std::to_string(lineNo) +
                       ": expected 'id<TAB>features[<TAB>labels]'");
    }
    if (!ids.insert(fields[0]).second) {
      throw ParseError(path + ": line " + std::to_string(lineNo) + ": duplicate id '" + fields[0] + "'");
    }
    auto resolve = [&](const std::string& p) {
      const fs::path fp(p);
      return (fp.is_absolute() ? fp : base / fp).string();
    };
    ManifestEntry e{fields[0], resolve(fields[1]), ""};
    if (fields.size() == 3 && !fields[2].empty()) e.labelPath = resolve(fields[2]);
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  os << "# id\tfeatures\tlabels\n";
  for (const auto& e : entries) {
    os << e.id << '\t' << e.featurePath;
    if (!e.labelPath.empty()) os << '\t' << e.labelPath;
    os << '\n';
  }
  write_binary_file(path, os.str());
}

Corpus load_corpus(const std::string& manifestPath, std::size_t numStates) {
  Corpus corpus;
  for (const auto& e : read_manifest(manifestPath)) {
    Utterance u;
    u.id = e.id;
    u.features = read_feature_file(e.featurePath);
    if (!e.labelPath.empty()) {
      auto labels = read_label_file(e.labelPath);
      if (labels.labels.size() != u.frames()) {
        throw FormatError(FormatIssue::BadHeader, e.labelPath + ": " + std::to_string(labels.labels.size()) +
                                                      " labels for " + std::to_string(u.frames()) + " frames");
      }
      if (numStates == 0) numStates = labels.numStates;
      if (labels.numStates != numStates) {
        throw FormatError(FormatIssue::BadHeader, e.labelPath + ": declares " + std::to_string(labels.numStates) +
                                                      " states, expected " + std::to_string(numStates));
      }
      u.labels = std::move(labels.labels);
    }
    corpus.push_back(std::move(u));
  }
  return corpus;
}

std::string write_corpus(const std::string& dir, const Corpus& corpus, std::size_t numStates) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(FormatIssue::Io, dir + ": cannot create directory: " + ec.message());
  std::vector<ManifestEntry> entries;
  for (const auto& u : corpus) {
    ManifestEntry e{u.id, u.id + ".feat", ""};
    write_feature_file((fs::path(dir) / e.featurePath).string(), u.features);
    if (u.labelled()) {
      e.labelPath = u.id + ".lab";
      write_label_file((fs::path(dir) / e.labelPath).string(), u.labels, numStates);
    }
    entries.push_back(std::move(e));
  }
  const std::string manifest = (fs::path(dir) / "manifest.tsv").string();
  write_manifest(manifest, entries);
  return manifest;
}

// --- checkpoints ------------------------------------------------------------

const Tensor* Checkpoint::find_tensor(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const std::uint64_t* Checkpoint::find_scalar(std::string_view name) const {
  for (const auto& [n, v] : scalars) {
    if (n == name) return &v;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kFormatVersion);
  w.text(ckpt.specText);
  w.u8(static_cast<std::uint8_t>(ckpt.dtype));
  w.u8(0);
  w.u16(0);
  w.u64(ckpt.framesSeen);
  w.u64(ckpt.stepCount);
  w.u32(checked_u32(ckpt.tensors.size(), "tensor count"));
  for (const auto& [name, t] : ckpt.tensors) {
    w.text(name);
    const std::string bytes = encode_tensor(t);
    w.u64(bytes.size());
    w.bytes(bytes.data(), bytes.size());
  }
  w.u32(checked_u32(ckpt.scalars.size(), "scalar count"));
  for (const auto& [name, v] : ckpt.scalars) {
    w.text(name);
    w.u64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic(kCheckpointMagic);
  Checkpoint c;
  c.specText = r.text();
  const std::uint8_t dt = r.u8();
  if (dt > 1) r.fail(FormatIssue::BadHeader, "unknown dtype code " + std::to_string(dt));
  c.dtype = static_cast<DType>(dt);
  r.u8();
  r.u16();
  c.framesSeen = r.u64();
  c.stepCount = r.u64();
  const std::uint32_t tensors = r.u32();
  for (std::uint32_t i = 0; i < tensors; ++i) {
    std::string name = r.text();
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) {
      r.fail(FormatIssue::TruncatedPayload, "truncated payload in tensor '" + name + "'");
    }
    Tensor t = decode_tensor(r.take(len), origin + " tensor '" + name + "'");
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  const std::uint32_t scalars = r.u32();
  for (std::uint32_t i = 0; i < scalars; ++i) {
    std::string name = r.text();
    c.scalars.emplace_back(std::move(name), r.u64());
  }
  r.finish();
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_binary_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_binary_file(path), path); }

// --- metrics ----------------------------------------------------------------

std::string format_metrics(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "framesSeen\tloss\taccuracy\tlr\n";
  for (const auto& r : rows) {
    os << r.framesSeen << '\t' << format_double(r.loss) << '\t' << format_double(r.accuracy) << '\t'
       << format_double(r.lr) << '\n';
  }
  return os.str();
}

void write_metrics_log(const std::string& path, const std::vector<MetricsRow>& rows) {
  write_binary_file(path, format_metrics(rows));
}

}  // namespace seqcnn
