#include "driftfuse/feature_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "driftfuse/errors.hpp"

namespace driftfuse {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::bad_magic: return "bad magic";
    case FormatErrorKind::bad_version: return "unsupported version";
    case FormatErrorKind::truncated: return "truncated";
    case FormatErrorKind::dimension_mismatch: return "dimension mismatch";
    case FormatErrorKind::bad_record: return "bad record";
    case FormatErrorKind::missing_domain: return "missing domain";
    case FormatErrorKind::io: return "i/o error";
  }
  return "unknown";
}

namespace fs = std::filesystem;

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

FeatureFileHeader parse_header(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, source + ": not a DIFZ feature file");
  }
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError(FormatErrorKind::truncated, source + ": header truncated");
  }
  FeatureFileHeader h;
  const char* p = bytes.data() + 4;
  h.version = get_le<std::uint16_t>(p);
  h.feature_dim = get_le<std::uint32_t>(p + 2);
  h.num_classes = get_le<std::uint32_t>(p + 6);
  h.record_count = get_le<std::uint64_t>(p + 10);
  if (h.version != kFeatureVersion) {
    throw FormatError(FormatErrorKind::bad_version,
                      source + ": version " + std::to_string(h.version) + " (expected " +
                          std::to_string(kFeatureVersion) + ")");
  }
  return h;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string encode_features(const FeatureBatch& batch, std::uint32_t num_classes) {
  const std::size_t dim = batch.feature_dim();
  if (!all_finite(batch.features())) {
    throw ShapeError("encode_features: non-finite feature value");
  }
  for (auto y : batch.labels()) {
    if (y >= num_classes) {
      throw ShapeError("encode_features: label " + std::to_string(y) + " >= num_classes " +
                       std::to_string(num_classes));
    }
  }
  std::string out;
  out.reserve(kFeatureHeaderBytes + batch.size() * (4 * dim + 6));
  out.append(kFeatureMagic, 4);
  put_le<std::uint16_t>(out, kFeatureVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put_le<std::uint32_t>(out, num_classes);
  put_le<std::uint64_t>(out, batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (double v : batch.features().row(r)) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    put_le<std::uint32_t>(out, batch.labels()[r]);
    put_le<std::uint16_t>(out, batch.domain_ids()[r]);
  }
  return out;
}

FeatureFile decode_features(std::string_view bytes, const std::string& source) {
  FeatureFile file;
  file.header = parse_header(bytes, source);
  const auto& h = file.header;
  const std::uint64_t record_bytes = 4ULL * h.feature_dim + 6;
  const std::uint64_t payload = bytes.size() - kFeatureHeaderBytes;
  if (h.record_count > payload / record_bytes || payload < h.record_count * record_bytes) {
    throw FormatError(FormatErrorKind::truncated,
                      source + ": header promises " + std::to_string(h.record_count) +
                          " records of dim " + std::to_string(h.feature_dim) + " but payload has " +
                          std::to_string(payload) + " bytes");
  }
  if (payload != h.record_count * record_bytes) {
    throw FormatError(FormatErrorKind::dimension_mismatch,
                      source + ": payload of " + std::to_string(payload) +
                          " bytes disagrees with header (" + std::to_string(h.record_count) +
                          " records of dim " + std::to_string(h.feature_dim) + ")");
  }

  const std::size_t n = h.record_count;
  Matrix features(n, h.feature_dim);
  std::vector<std::uint32_t> labels(n);
  std::vector<std::uint16_t> domains(n);
  const char* p = bytes.data() + kFeatureHeaderBytes;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = features.row(r);
    for (std::size_t c = 0; c < h.feature_dim; ++c, p += 4) {
      row[c] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)));
      if (!std::isfinite(row[c])) {
        throw FormatError(FormatErrorKind::bad_record,
                          source + ": non-finite feature in record " + std::to_string(r));
      }
    }
    labels[r] = get_le<std::uint32_t>(p);
    p += 4;
    domains[r] = get_le<std::uint16_t>(p);
    p += 2;
    if (labels[r] >= h.num_classes) {
      throw FormatError(FormatErrorKind::bad_record,
                        source + ": record " + std::to_string(r) + " has label " +
                            std::to_string(labels[r]) + " >= num_classes " +
                            std::to_string(h.num_classes));
    }
  }
  file.batch = FeatureBatch(std::move(features), std::move(labels), std::move(domains));
  return file;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw FormatError(FormatErrorKind::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw FormatError(FormatErrorKind::io, "cannot move " + tmp.string() + " into place");
  }
}

void write_features(const fs::path& path, const FeatureBatch& batch, std::uint32_t num_classes) {
  write_file_atomic(path, encode_features(batch, num_classes));
}

FeatureFile read_features(const fs::path& path) {
  if (!fs::exists(path)) {
    throw FormatError(FormatErrorKind::io, "feature file not found: " + path.string());
  }
  return decode_features(slurp(path), path.string());
}

FeatureFileHeader read_feature_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  std::string buf(kFeatureHeaderBytes, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(buf, path.string());
}

FeatureFile import_csv(const fs::path& path, std::uint32_t num_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatErrorKind::truncated, path.string() + ": empty CSV");

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(trim(cell));
  }
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "domain") {
    throw FormatError(FormatErrorKind::bad_record,
                      path.string() + ": CSV header must be d0..dN,label,domain");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[i] != "d" + std::to_string(i)) {
      throw FormatError(FormatErrorKind::bad_record,
                        path.string() + ": expected column d" + std::to_string(i));
    }
  }

  std::vector<double> values;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint16_t> domains;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() != dim + 2) {
      throw FormatError(FormatErrorKind::dimension_mismatch,
                        path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(dim + 2) + " fields");
    }
    try {
      for (std::size_t i = 0; i < dim; ++i) {
        values.push_back(static_cast<double>(static_cast<float>(std::stod(cells[i]))));
      }
      labels.push_back(static_cast<std::uint32_t>(std::stoul(cells[dim])));
      domains.push_back(static_cast<std::uint16_t>(std::stoul(cells[dim + 1])));
    } catch (const std::exception&) {
      throw FormatError(FormatErrorKind::bad_record,
                        path.string() + ":" + std::to_string(line_no) + ": unparsable field");
    }
  }

  FeatureFile file;
  const std::size_t n = labels.size();
  std::uint32_t inferred = 0;
  for (auto y : labels) inferred = std::max(inferred, y + 1);
  file.header.feature_dim = static_cast<std::uint32_t>(dim);
  file.header.num_classes = num_classes == 0 ? inferred : num_classes;
  file.header.record_count = n;
  if (inferred > file.header.num_classes) {
    throw FormatError(FormatErrorKind::bad_record, path.string() + ": label exceeds class count");
  }
  file.batch = FeatureBatch(Matrix(n, dim, std::move(values)), std::move(labels), std::move(domains));
  return file;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::missing_domain, "manifest not found: " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string body = trim(std::string_view(t).substr(1));
      const auto colon = body.find(':');
      if (colon != std::string::npos && colon > 0 &&
          body.find_first_of(" \t") > colon) {
        m.metadata.emplace_back(trim(std::string_view(body).substr(0, colon)),
                                trim(std::string_view(body).substr(colon + 1)));
      }
      continue;
    }
    std::istringstream ss(t);
    ManifestEntry e;
    ss >> e.name;
    if (!(ss >> e.file)) e.file = e.name + ".difz";
    m.domains.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::string out = "# driftfuse manifest v1\n";
  for (const auto& [k, v] : manifest.metadata) out += "# " + k + ": " + v + "\n";
  for (const auto& d : manifest.domains) out += d.name + " " + d.file + "\n";
  write_file_atomic(path, out);
}

std::vector<fs::path> write_domain_files(const fs::path& dir, std::span<const FeatureBatch> pools,
                                         std::span<const std::string> names,
                                         std::uint32_t num_classes) {
  if (pools.size() != names.size()) throw ShapeError("write_domain_files: names/pools mismatch");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw FormatError(FormatErrorKind::io, "cannot create output directory " + dir.string());
  }
  std::vector<fs::path> written;
  Manifest manifest;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const std::string file = names[i] + ".difz";
    write_features(dir / file, pools[i], num_classes);
    written.push_back(dir / file);
    manifest.domains.push_back({names[i], file});
  }
  write_manifest(dir / kManifestName, manifest);
  written.push_back(dir / kManifestName);
  return written;
}

DomainStream load_stream(const fs::path& dir, const StreamLayout& layout) {
  const Manifest manifest = read_manifest(dir / kManifestName);
  if (manifest.domains.empty()) {
    throw FormatError(FormatErrorKind::missing_domain, "manifest lists no domains: " + dir.string());
  }
  std::map<std::string, FeatureFile> files;
  std::vector<FeatureBatch> pools;
  std::vector<std::string> names;
  std::uint32_t num_classes = 0;
  std::uint32_t feature_dim = 0;

  for (std::size_t id = 0; id < manifest.domains.size(); ++id) {
    const auto& entry = manifest.domains[id];
    auto it = files.find(entry.file);
    if (it == files.end()) {
      const fs::path p = dir / entry.file;
      if (!fs::exists(p)) {
        throw FormatError(FormatErrorKind::missing_domain,
                          "domain '" + entry.name + "' (id " + std::to_string(id) +
                              "): missing feature file " + p.string());
      }
      it = files.emplace(entry.file, read_features(p)).first;
    }
    const FeatureFile& f = it->second;
    if (feature_dim == 0) {
      feature_dim = f.header.feature_dim;
      num_classes = f.header.num_classes;
    } else if (f.header.feature_dim != feature_dim || f.header.num_classes != num_classes) {
      throw FormatError(FormatErrorKind::dimension_mismatch,
                        entry.file + ": header disagrees with other domain files");
    }
    std::vector<std::size_t> rows;
    const auto ids = f.batch.domain_ids();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] == id) rows.push_back(r);
    }
    if (rows.empty()) {
      throw FormatError(FormatErrorKind::missing_domain,
                        "domain '" + entry.name + "' (id " + std::to_string(id) +
                            ") has no records in " + entry.file);
    }
    pools.push_back(f.batch.select(rows));
    names.push_back(entry.name);
  }
  return assemble_stream(std::move(pools), std::move(names), num_classes, layout);
}

}  // namespace driftfuse
