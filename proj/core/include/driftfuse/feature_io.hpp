#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftfuse/data.hpp"

namespace driftfuse {

// DIFZ feature file, little-endian:
//   "DIFZ" | version u16 | feature_dim u32 | num_classes u32 | record_count u64
//   record_count x [ feature_dim x f32 | label u32 | domain_id u16 ]
inline constexpr char kFeatureMagic[4] = {'D', 'I', 'F', 'Z'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 2 + 4 + 4 + 8;

struct FeatureFileHeader {
  std::uint16_t version = kFeatureVersion;
  std::uint32_t feature_dim = 0;
  std::uint32_t num_classes = 0;
  std::uint64_t record_count = 0;
};

struct FeatureFile {
  FeatureFileHeader header;
  FeatureBatch batch;
};

std::string encode_features(const FeatureBatch& batch, std::uint32_t num_classes);
/// `source` names the input in error messages.
FeatureFile decode_features(std::string_view bytes, const std::string& source = "<memory>");

void write_features(const std::filesystem::path& path, const FeatureBatch& batch,
                    std::uint32_t num_classes);
FeatureFile read_features(const std::filesystem::path& path);
FeatureFileHeader read_feature_header(const std::filesystem::path& path);

/// Tiny fixtures: header `d0,...,dN,label,domain`, one record per row.
/// `num_classes` = 0 infers max label + 1.
FeatureFile import_csv(const std::filesystem::path& path, std::uint32_t num_classes = 0);

// Sidecar manifest: one domain per line in id order, `name [file]`. Lines
// starting with '#' are comments; `# key: value` comments are kept as
// metadata. A missing file column means `<name>.difz`.
struct ManifestEntry {
  std::string name;
  std::string file;
};

struct Manifest {
  std::vector<ManifestEntry> domains;
  std::vector<std::pair<std::string, std::string>> metadata;
};

inline constexpr const char* kManifestName = "manifest.txt";

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// One file per pool plus the manifest. Returns the written paths.
std::vector<std::filesystem::path> write_domain_files(const std::filesystem::path& dir,
                                                      std::span<const FeatureBatch> pools,
                                                      std::span<const std::string> names,
                                                      std::uint32_t num_classes);

/// Reads `dir/manifest.txt` and every referenced file, keeps the records of
/// each domain whose domain_id equals its manifest position.
DomainStream load_stream(const std::filesystem::path& dir, const StreamLayout& layout);

/// Writes through a temporary sibling and renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace driftfuse
