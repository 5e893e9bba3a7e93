#include <gtest/gtest.h>

#include <fstream>

#include "seqcnn/io.hpp"
#include "seqcnn/keyvalue.hpp"
#include "support/support.hpp"

using namespace seqcnn;

namespace {

FormatIssue issue_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.issue();
  }
  ADD_FAILURE() << "no FormatError thrown";
  return FormatIssue::Io;
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST(Features, RoundTripIsByteExact) {
  Rng rng(1);
  const Tensor f = test::random_tensor({17, 5}, rng, DType::F32);
  const std::string bytes = encode_features(f);
  EXPECT_EQ(bytes.size(), 4u + 4 + 8 + 17 * 5 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "SEQF");
  const Tensor back = decode_features(bytes);
  EXPECT_TRUE(back.identical(f));
  EXPECT_EQ(encode_features(back), bytes);
}

TEST(Features, LittleEndianHeader) {
  const std::string bytes = encode_features(Tensor::filled({2, 3}, 1.0f, DType::F32));
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3u);
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 0x3fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[18]), 0x80u);
}

TEST(Features, Errors) {
  const std::string good = encode_features(Tensor::filled({2, 3}, 0.5, DType::F32));
  EXPECT_EQ(issue_of([&] { decode_features(good.substr(0, 10)); }), FormatIssue::TruncatedHeader);
  EXPECT_EQ(issue_of([&] { decode_features(good.substr(0, good.size() - 1)); }), FormatIssue::TruncatedPayload);
  EXPECT_EQ(issue_of([&] { decode_features(good + "x"); }), FormatIssue::TrailingBytes);
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(issue_of([&] { decode_features(magic); }), FormatIssue::BadMagic);
  std::string version = good;
  version[4] = 9;
  EXPECT_EQ(issue_of([&] { decode_features(version); }), FormatIssue::UnsupportedVersion);
  EXPECT_EQ(issue_of([&] { decode_features(encode_labels(std::vector<std::int32_t>{0}, 1)); }), FormatIssue::BadMagic);
  EXPECT_EQ(issue_of([&] { read_feature_file("/nonexistent/x.feat"); }), FormatIssue::Io);
}

TEST(Labels, RoundTripAndRange) {
  const std::vector<std::int32_t> labels{0, 3, 2, 2, 1};
  const std::string bytes = encode_labels(labels, 4);
  const LabelData d = decode_labels(bytes);
  EXPECT_EQ(d.labels, labels);
  EXPECT_EQ(d.numStates, 4u);
  EXPECT_EQ(encode_labels(d.labels, d.numStates), bytes);
  EXPECT_EQ(issue_of([&] { encode_labels(labels, 3); }), FormatIssue::LabelOutOfRange);
  std::string bad = bytes;
  bad[16] = 7;
  EXPECT_EQ(issue_of([&] { decode_labels(bad); }), FormatIssue::LabelOutOfRange);
}

TEST(Tensors, RoundTripBothPrecisions) {
  Rng rng(2);
  for (const DType d : {DType::F32, DType::F64}) {
    const Tensor t = test::random_tensor({2, 3, 4}, rng, d);
    const std::string bytes = encode_tensor(t);
    const Tensor back = decode_tensor(bytes);
    EXPECT_TRUE(back.identical(t));
    EXPECT_EQ(encode_tensor(back), bytes);
  }
  std::string bad = encode_tensor(Tensor({2}, DType::F32));
  bad[8] = 5;
  EXPECT_EQ(issue_of([&] { decode_tensor(bad); }), FormatIssue::BadHeader);
}

TEST(Checkpoints, RoundTrip) {
  Rng rng(3);
  Checkpoint c;
  c.specText = "format = x\n";
  c.dtype = DType::F64;
  c.framesSeen = 123456789012ull;
  c.stepCount = 42;
  c.tensors.emplace_back("a", test::random_tensor({3}, rng));
  c.tensors.emplace_back("b.c", test::random_tensor({2, 2}, rng, DType::F32));
  c.scalars.emplace_back("n", 7);
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.specText, c.specText);
  EXPECT_EQ(back.framesSeen, c.framesSeen);
  EXPECT_EQ(back.stepCount, 42u);
  ASSERT_NE(back.find_tensor("b.c"), nullptr);
  EXPECT_TRUE(back.find_tensor("b.c")->identical(c.tensors[1].second));
  EXPECT_EQ(*back.find_scalar("n"), 7u);
  EXPECT_EQ(back.find_tensor("zz"), nullptr);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  const FormatIssue cut = issue_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); });
  EXPECT_TRUE(cut == FormatIssue::TruncatedHeader || cut == FormatIssue::TruncatedPayload);
}

TEST(Manifest, ResolvesRelativePathsAndComments) {
  test::TempDir dir("manifest");
  write_text(dir.file("m.tsv"), "# comment\n\nu1\ta.feat\ta.lab\nu2\t/abs/b.feat\n");
  const auto entries = read_manifest(dir.file("m.tsv"));
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].featurePath, dir.file("a.feat"));
  EXPECT_EQ(entries[0].labelPath, dir.file("a.lab"));
  EXPECT_EQ(entries[1].featurePath, "/abs/b.feat");
  EXPECT_TRUE(entries[1].labelPath.empty());
}

TEST(Manifest, Errors) {
  test::TempDir dir("manifest-bad");
  write_text(dir.file("dup.tsv"), "u1\ta\nu1\tb\n");
  EXPECT_THROW(read_manifest(dir.file("dup.tsv")), ParseError);
  write_text(dir.file("short.tsv"), "u1\n");
  EXPECT_THROW(read_manifest(dir.file("short.tsv")), ParseError);
  EXPECT_EQ(issue_of([&] { read_manifest(dir.file("missing.tsv")); }), FormatIssue::Io);
}

TEST(Corpus, WriteAndLoadRoundTrip) {
  Rng rng(4);
  Corpus corpus;
  for (int i = 0; i < 4; ++i) corpus.push_back(test::random_utterance(5 + i, 3, rng, 6, "utt" + std::to_string(i)));
  corpus.push_back(test::random_utterance(4, 3, rng, 0, "unlabelled"));
  test::TempDir dir("corpus");
  const std::string manifest = write_corpus(dir.file("c"), corpus, 6);
  const Corpus back = load_corpus(manifest);
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back[i].id, corpus[i].id);
    EXPECT_TRUE(back[i].features.identical(corpus[i].features));
    EXPECT_EQ(back[i].labels, corpus[i].labels);
  }
  EXPECT_EQ(issue_of([&] { load_corpus(manifest, 7); }), FormatIssue::BadHeader);
  const std::string again = write_corpus(dir.file("d"), back, 6);
  EXPECT_EQ(read_binary_file(again), read_binary_file(manifest));
  EXPECT_EQ(read_binary_file(dir.file("d/utt2.feat")), read_binary_file(dir.file("c/utt2.feat")));
}

TEST(Metrics, TabSeparatedWithHeader) {
  const std::vector<MetricsRow> rows{{0, 1.5, 0.25, 0.003}, {128, 1.25, 0.5, 0.001}};
  const std::string text = format_metrics(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), "framesSeen\tloss\taccuracy\tlr");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "0\t1.5\t0.25\t0.003");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 4), "128\t");
}
