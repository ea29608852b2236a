#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "driftfuse/errors.hpp"
#include "driftfuse/feature_io.hpp"
#include "driftfuse/synthetic_latents.hpp"
#include "support/temp_dir.hpp"

namespace driftfuse {
namespace {

using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// DIFZ bytes assembled by hand from the documented layout.
std::string hand_built(std::uint32_t dim, std::uint32_t classes,
                       const std::vector<std::vector<float>>& rows,
                       const std::vector<std::uint32_t>& labels,
                       const std::vector<std::uint16_t>& domains) {
  std::string b = "DIFZ";
  put<std::uint16_t>(b, 1);
  put<std::uint32_t>(b, dim);
  put<std::uint32_t>(b, classes);
  put<std::uint64_t>(b, rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (float f : rows[r]) put<std::uint32_t>(b, std::bit_cast<std::uint32_t>(f));
    put<std::uint32_t>(b, labels[r]);
    put<std::uint16_t>(b, domains[r]);
  }
  return b;
}

FeatureBatch small_batch() {
  return FeatureBatch(Matrix{{0.5, -1.25, 3.0}, {0.0, 2.5, -0.125}}, {1, 0}, {0, 3});
}

TEST(Difz, MatchesHandBuiltBytes) {
  const std::string expected =
      hand_built(3, 2, {{0.5f, -1.25f, 3.0f}, {0.0f, 2.5f, -0.125f}}, {1, 0}, {0, 3});
  EXPECT_EQ(encode_features(small_batch(), 2), expected);
  const FeatureFile f = decode_features(expected);
  EXPECT_EQ(f.header.feature_dim, 3u);
  EXPECT_EQ(f.header.num_classes, 2u);
  EXPECT_EQ(f.header.record_count, 2u);
  EXPECT_EQ(f.batch, small_batch());
}

TEST(Difz, RoundTripIsIdentity) {
  SyntheticConfig cfg;
  cfg.samples_per_domain = 50;
  const auto pools = generate_domain_pools(cfg);
  for (const auto& pool : pools) {
    const FeatureFile back = decode_features(encode_features(pool, 10));
    EXPECT_EQ(back.batch, pool);
  }
  TempDir dir("difz");
  write_features(dir / "a.difz", pools[0], 10);
  EXPECT_EQ(read_features(dir / "a.difz").batch, pools[0]);
  EXPECT_EQ(read_feature_header(dir / "a.difz").record_count, 50u);
}

TEST(Difz, EmptyBatchIsValid) {
  const std::string bytes = encode_features(FeatureBatch(4), 3);
  EXPECT_EQ(bytes.size(), kFeatureHeaderBytes);
  const FeatureFile f = decode_features(bytes);
  EXPECT_EQ(f.header.record_count, 0u);
  EXPECT_EQ(f.header.feature_dim, 4u);
  EXPECT_TRUE(f.batch.empty());
}

FormatErrorKind kind_of(const std::string& bytes) {
  try {
    decode_features(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError";
  return FormatErrorKind::io;
}

TEST(Difz, TypedErrors) {
  const std::string good = encode_features(small_batch(), 2);
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), FormatErrorKind::bad_magic);
  EXPECT_EQ(kind_of("DI"), FormatErrorKind::bad_magic);

  std::string version = good;
  version[4] = 2;
  EXPECT_EQ(kind_of(version), FormatErrorKind::bad_version);

  EXPECT_EQ(kind_of(good.substr(0, 10)), FormatErrorKind::truncated);
  EXPECT_EQ(kind_of(good.substr(0, good.size() - 1)), FormatErrorKind::truncated);
  EXPECT_EQ(kind_of(good + "x"), FormatErrorKind::dimension_mismatch);

  std::string label = good;
  label[kFeatureHeaderBytes + 12] = 9;  // first record's label
  EXPECT_EQ(kind_of(label), FormatErrorKind::bad_record);

  std::string huge = good;
  for (std::size_t i = 14; i < 22; ++i) huge[i] = '\xff';  // record_count
  EXPECT_EQ(kind_of(huge), FormatErrorKind::truncated);

  std::string nan_feature = good;
  const auto nan_bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  std::memcpy(nan_feature.data() + kFeatureHeaderBytes, &nan_bits, 4);
  EXPECT_EQ(kind_of(nan_feature), FormatErrorKind::bad_record);

  EXPECT_THROW(encode_features(small_batch(), 1), ShapeError);
  EXPECT_THROW(read_features("/nonexistent/x.difz"), FormatError);
}

TEST(Csv, ImportsFixture) {
  TempDir dir("csv");
  std::ofstream(dir / "tiny.csv") << "d0,d1,label,domain\n0.5,1,1,0\n-2,0.25,0,1\n";
  const FeatureFile f = import_csv(dir / "tiny.csv");
  EXPECT_EQ(f.header.num_classes, 2u);
  EXPECT_EQ(f.batch.features(), (Matrix{{0.5, 1}, {-2, 0.25}}));
  EXPECT_EQ(std::vector(f.batch.labels().begin(), f.batch.labels().end()),
            (std::vector<std::uint32_t>{1, 0}));
  EXPECT_EQ(f.batch.domain_ids()[1], 1u);

  std::ofstream(dir / "bad.csv") << "d0,d1,label,domain\n0.5,1,1\n";
  EXPECT_THROW(import_csv(dir / "bad.csv"), FormatError);
  std::ofstream(dir / "word.csv") << "d0,label,domain\nabc,1,0\n";
  EXPECT_THROW(import_csv(dir / "word.csv"), FormatError);
}

TEST(Manifest, RoundTripAndDefaults) {
  TempDir dir("manifest");
  Manifest m;
  m.metadata = {{"backbone", "clip-vit-b16"}, {"seed", "3"}};
  m.domains = {{"real", "real.difz"}, {"sketch", "all.difz"}};
  write_manifest(dir / kManifestName, m);
  const Manifest back = read_manifest(dir / kManifestName);
  EXPECT_EQ(back.metadata, m.metadata);
  ASSERT_EQ(back.domains.size(), 2u);
  EXPECT_EQ(back.domains[1].file, "all.difz");

  std::ofstream(dir / "plain.txt") << "# a comment with words: not metadata\n\nalpha\nbeta b.difz\n";
  const Manifest plain = read_manifest(dir / "plain.txt");
  EXPECT_TRUE(plain.metadata.empty());
  ASSERT_EQ(plain.domains.size(), 2u);
  EXPECT_EQ(plain.domains[0].file, "alpha.difz");
  EXPECT_EQ(plain.domains[1].file, "b.difz");
}

TEST(LoadStream, ReadsDirectoryAndSplits) {
  SyntheticConfig cfg;
  cfg.samples_per_domain = 40;
  const auto pools = generate_domain_pools(cfg);
  const auto names = synthetic_domain_names(cfg);
  TempDir dir("stream");
  const auto written = write_domain_files(dir.path(), pools, names, 10);
  EXPECT_EQ(written.size(), 8u);

  const DomainStream from_disk = load_stream(dir.path(), {2, 0.2, 0});
  const DomainStream direct = generate_synthetic(cfg);
  ASSERT_EQ(from_disk.tasks.size(), 5u);
  ASSERT_EQ(from_disk.unseen.size(), 2u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(from_disk.tasks[i].name, names[i]);
    EXPECT_EQ(from_disk.tasks[i].train, direct.tasks[i].train);
    EXPECT_EQ(from_disk.tasks[i].test, direct.tasks[i].test);
    EXPECT_EQ(from_disk.tasks[i].test.size(), 8u);
  }
  EXPECT_EQ(from_disk.unseen[1].test, direct.unseen[1].test);
  EXPECT_TRUE(from_disk.unseen[1].train.empty());
}

TEST(LoadStream, SharedFileFilteredByDomainId) {
  TempDir dir("shared");
  FeatureBatch all(Matrix{{1}, {2}, {3}, {4}}, {0, 1, 0, 1}, {1, 0, 1, 0});
  write_features(dir / "all.difz", all, 2);
  write_manifest(dir / kManifestName, {{{"first", "all.difz"}, {"second", "all.difz"}}, {}});
  const DomainStream s = load_stream(dir.path(), {0, 0.5, 0});
  ASSERT_EQ(s.tasks.size(), 2u);
  EXPECT_EQ(s.tasks[0].train.size() + s.tasks[0].test.size(), 2u);
  for (auto id : s.tasks[0].test.domain_ids()) EXPECT_EQ(id, 0u);
  EXPECT_EQ(s.tasks[1].test.features()(0, 0) + s.tasks[1].train.features()(0, 0), 4.0);
}

TEST(LoadStream, MissingPieces) {
  TempDir dir("missing");
  EXPECT_THROW(load_stream(dir.path(), {}), FormatError);
  write_manifest(dir / kManifestName, {{{"ghost", "ghost.difz"}}, {}});
  try {
    load_stream(dir.path(), {0, 0.2, 0});
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::missing_domain);
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SyntheticConfig cfg;
  cfg.samples_per_domain = 100;
  EXPECT_EQ(generate_domain_pools(cfg), generate_domain_pools(cfg));
  const auto names = synthetic_domain_names(cfg);
  ASSERT_EQ(names.size(), 7u);
  EXPECT_EQ(names.front(), "domain_00");
  EXPECT_EQ(names.back(), "unseen_01");
  cfg.seed = 1;
  SyntheticConfig other = cfg;
  other.seed = 2;
  EXPECT_NE(generate_domain_pools(cfg), generate_domain_pools(other));
}

TEST(Synthetic, FeaturesSurviveFloatStorage) {
  SyntheticConfig cfg;
  cfg.samples_per_domain = 20;
  for (const auto& pool : generate_domain_pools(cfg)) {
    for (double v : pool.features().values()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

// Nearest-centroid probe on the nuisance latents: fit on even rows, score on odd rows.
double nuisance_probe(const SyntheticConfig& cfg, std::size_t domain) {
  std::vector<Matrix> latents;
  const auto pools = generate_domain_pools(cfg, &latents);
  const Matrix& z = latents[domain];
  const auto y = pools[domain].labels();
  Matrix centroid(cfg.classes, z.cols());
  std::vector<double> count(cfg.classes, 0.0);
  for (std::size_t r = 0; r < z.rows(); r += 2) {
    for (std::size_t k = 0; k < z.cols(); ++k) centroid(y[r], k) += z(r, k);
    count[y[r]] += 1.0;
  }
  for (std::size_t c = 0; c < cfg.classes; ++c)
    for (double& v : centroid.row(c)) v /= std::max(count[c], 1.0);
  std::size_t correct = 0, total = 0;
  for (std::size_t r = 1; r < z.rows(); r += 2, ++total) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) d += (z(r, k) - centroid(c, k)) * (z(r, k) - centroid(c, k));
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == y[r];
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TEST(Synthetic, UnbiasedNuisanceCarriesNoClassInformation) {
  SyntheticConfig cfg;
  cfg.bias_ratio = 0.0;
  cfg.samples_per_domain = 8000;
  for (std::size_t d : {0u, 3u, 6u}) {
    EXPECT_NEAR(nuisance_probe(cfg, d), 1.0 / cfg.classes, 0.05) << "domain " << d;
  }
}

TEST(Synthetic, FullyBiasedNuisanceIsPredictive) {
  SyntheticConfig cfg;
  cfg.bias_ratio = 1.0;
  cfg.bias_scale = 12.0;
  cfg.samples_per_domain = 2000;
  for (std::size_t d : {0u, 4u}) EXPECT_GE(nuisance_probe(cfg, d), 0.9) << "domain " << d;
}

TEST(Synthetic, Validation) {
  SyntheticConfig cfg;
  cfg.bias_ratio = 1.5;
  EXPECT_THROW(generate_domain_pools(cfg), ConfigError);
  cfg = {};
  cfg.classes = 0;
  EXPECT_THROW(generate_domain_pools(cfg), ConfigError);
  cfg = {};
  cfg.unseen_domains = 9;
  cfg.num_domains = 0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(AssembleStream, Layout) {
  std::vector<FeatureBatch> pools(3, FeatureBatch(Matrix(10, 2), std::vector<std::uint32_t>(10, 0),
                                                  std::vector<std::uint16_t>(10, 0)));
  EXPECT_THROW(assemble_stream(pools, {"a", "b", "c"}, 1, {3, 0.2, 0}), ConfigError);
  EXPECT_THROW(assemble_stream(pools, {"a", "b", "c"}, 1, {0, 1.0, 0}), ConfigError);
  EXPECT_THROW(assemble_stream(pools, {"a", "b"}, 1, {0, 0.2, 0}), ShapeError);
  const DomainStream s = assemble_stream(pools, {"a", "b", "c"}, 1, {1, 0.3, 0});
  EXPECT_EQ(s.tasks.size(), 2u);
  EXPECT_EQ(s.tasks[0].test.size(), 3u);
  EXPECT_EQ(s.tasks[0].train.size(), 7u);
  EXPECT_EQ(s.unseen[0].test.size(), 10u);
  EXPECT_EQ(s.domain(2).name, "c");
}

}  // namespace
}  // namespace driftfuse
