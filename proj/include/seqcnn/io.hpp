#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seqcnn/batching.hpp"
#include "seqcnn/tensor.hpp"

namespace seqcnn {

// Binary containers are little-endian. Every file starts with a 4-byte
// magic and a u32 version.
//
//   SEQF  features   u32 T, u32 F, then T*F binary32, frame-major
//   SEQL  labels     u32 T, u32 numStates, then T int32
//   SEQT  tensor     u8 dtype (0 f32, 1 f64), u8 rank, u16 zero, rank x u32 dims, payload
//   SEQC  checkpoint see encode_checkpoint

enum class FormatIssue {
  Io,
  BadMagic,
  UnsupportedVersion,
  TruncatedHeader,
  TruncatedPayload,
  TrailingBytes,
  LabelOutOfRange,
  BadHeader,
};

std::string to_string(FormatIssue issue);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatIssue issue, const std::string& message)
      : std::runtime_error(message), issue_(issue) {}
  FormatIssue issue() const { return issue_; }

 private:
  FormatIssue issue_;
};

inline constexpr std::uint32_t kFormatVersion = 1;

std::string encode_features(const Tensor& features);
Tensor decode_features(std::string_view bytes, const std::string& origin = "features");
void write_feature_file(const std::string& path, const Tensor& features);
Tensor read_feature_file(const std::string& path);

struct LabelData {
  std::vector<std::int32_t> labels;
  std::size_t numStates = 0;
};

std::string encode_labels(std::span<const std::int32_t> labels, std::size_t numStates);
LabelData decode_labels(std::string_view bytes, const std::string& origin = "labels");
void write_label_file(const std::string& path, std::span<const std::int32_t> labels, std::size_t numStates);
LabelData read_label_file(const std::string& path);

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes, const std::string& origin = "tensor");
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string featurePath;
  std::string labelPath;  // empty when unlabelled
};

/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

/// Loads every utterance of a manifest; label files must agree on
/// numStates when `numStates` is 0, and match it otherwise.
Corpus load_corpus(const std::string& manifestPath, std::size_t numStates = 0);

/// Writes one feature (and label) file per utterance plus `manifest.tsv`
/// into `dir`; returns the manifest path.
std::string write_corpus(const std::string& dir, const Corpus& corpus, std::size_t numStates);

struct Checkpoint {
  std::string specText;
  DType dtype = DType::F32;
  std::uint64_t framesSeen = 0;
  std::uint64_t stepCount = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::uint64_t>> scalars;

  const Tensor* find_tensor(std::string_view name) const;
  const std::uint64_t* find_scalar(std::string_view name) const;
};

/// SEQC layout: magic, u32 version, u32 spec length + spec text, u8 dtype,
/// 3 zero bytes, u64 framesSeen, u64 stepCount, u32 tensor count, then per
/// tensor (u32 name length, name, u64 byte length, SEQT bytes), u32 scalar
/// count, then per scalar (u32 name length, name, u64 value).
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "checkpoint");
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

struct MetricsRow {
  std::uint64_t framesSeen = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

/// Tab-separated `framesSeen loss accuracy lr` with a header line.
std::string format_metrics(const std::vector<MetricsRow>& rows);
void write_metrics_log(const std::string& path, const std::vector<MetricsRow>& rows);

std::string read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, std::string_view bytes);

}  // namespace seqcnn
