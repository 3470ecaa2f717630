#include "pip/serialize.hpp"

#include <cstring>
#include <fstream>

namespace pip {
namespace {

constexpr char kMagic[8] = {'P', 'I', 'P', 'A', 'R', 'C', 'H', '\n'};

// Streaming FNV-1a over everything preceding the trailer.
struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void feed(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
};

void put_bytes(std::ofstream& os, Fnv1a& sum, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  sum.feed(data, n);
}

void put_u32(std::ofstream& os, Fnv1a& sum, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, sum, b, 4);
}

void put_u64(std::ofstream& os, Fnv1a& sum, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, sum, b, 8);
}

void put_f32_span(std::ofstream& os, Fnv1a& sum, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4, "IEEE-754 single precision expected");
  // Buffered little-endian encode; on little-endian hosts this is a byte copy.
  std::vector<unsigned char> buf(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    buf[i * 4 + 0] = static_cast<unsigned char>(bits);
    buf[i * 4 + 1] = static_cast<unsigned char>(bits >> 8);
    buf[i * 4 + 2] = static_cast<unsigned char>(bits >> 16);
    buf[i * 4 + 3] = static_cast<unsigned char>(bits >> 24);
  }
  put_bytes(os, sum, buf.data(), buf.size());
}

struct Reader {
  std::ifstream is;
  Fnv1a sum;
  std::string path;

  void take(void* dst, std::size_t n, const char* what) {
    is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw ArchiveError(path + ": truncated archive while reading " + std::string(what));
    sum.feed(dst, n);
  }
  std::uint32_t take_u32(const char* what) {
    unsigned char b[4];
    take(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t take_u64(const char* what) {
    unsigned char b[8];
    take(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
};

void validate_text(const std::string& s, bool is_key, const char* what) {
  for (char c : s) {
    if (c == '\n' || (is_key && c == '='))
      throw ArchiveError(std::string("archive ") + what + " contains a reserved character: " + s);
  }
  if (is_key && s.empty()) throw ArchiveError("archive manifest key is empty");
}

}  // namespace

void NamedArrays::set_meta(const std::string& key, const std::string& value) {
  for (auto& kv : manifest)
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  manifest.emplace_back(key, value);
}

const std::string* NamedArrays::meta(const std::string& key) const {
  for (const auto& kv : manifest)
    if (kv.first == key) return &kv.second;
  return nullptr;
}

const std::string& NamedArrays::meta_required(const std::string& key) const {
  const std::string* v = meta(key);
  if (!v) throw ArchiveError("archive manifest is missing key '" + key + "'");
  return *v;
}

void NamedArrays::add_array(const std::string& name, const float* data, std::size_t count) {
  add_array(name, std::vector<float>(data, data + count));
}

void NamedArrays::add_array(const std::string& name, std::vector<float> values) {
  if (array(name)) throw ArchiveError("archive already holds an array named '" + name + "'");
  arrays.emplace_back(name, std::move(values));
}

const std::vector<float>* NamedArrays::array(const std::string& name) const {
  for (const auto& kv : arrays)
    if (kv.first == name) return &kv.second;
  return nullptr;
}

const std::vector<float>& NamedArrays::array_required(const std::string& name) const {
  const std::vector<float>* v = array(name);
  if (!v) throw ArchiveError("archive is missing array '" + name + "'");
  return *v;
}

void save_named_arrays(const std::filesystem::path& path, const NamedArrays& data) {
  std::string manifest_text;
  for (const auto& [k, v] : data.manifest) {
    validate_text(k, true, "manifest key");
    validate_text(v, false, "manifest value");
    manifest_text += k;
    manifest_text += '=';
    manifest_text += v;
    manifest_text += '\n';
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ArchiveError(tmp.string() + ": cannot open for writing");
    Fnv1a sum;
    put_bytes(os, sum, kMagic, sizeof(kMagic));
    put_u32(os, sum, kArchiveVersion);
    put_u64(os, sum, manifest_text.size());
    put_bytes(os, sum, manifest_text.data(), manifest_text.size());
    put_u64(os, sum, data.arrays.size());
    for (const auto& [name, values] : data.arrays) {
      validate_text(name, true, "array name");
      put_u32(os, sum, static_cast<std::uint32_t>(name.size()));
      put_bytes(os, sum, name.data(), name.size());
      put_u64(os, sum, values.size());
      put_f32_span(os, sum, values.data(), values.size());
    }
    // Trailer checksum is written raw (not fed back into itself).
    const std::uint64_t digest = sum.h;
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(digest >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
    os.flush();
    if (!os) throw ArchiveError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

NamedArrays load_named_arrays(const std::filesystem::path& path) {
  Reader r;
  r.path = path.string();
  r.is.open(path, std::ios::binary);
  if (!r.is) throw ArchiveError(r.path + ": cannot open archive");

  char magic[sizeof(kMagic)];
  r.take(magic, sizeof(kMagic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ArchiveError(r.path + ": not an archive (bad magic)");
  const std::uint32_t version = r.take_u32("version");
  if (version != kArchiveVersion)
    throw ArchiveError(r.path + ": format version mismatch (file " + std::to_string(version) +
                       ", reader " + std::to_string(kArchiveVersion) + ")");

  NamedArrays out;
  const std::uint64_t manifest_len = r.take_u64("manifest length");
  std::string manifest_text(manifest_len, '\0');
  if (manifest_len) r.take(manifest_text.data(), manifest_len, "manifest");
  std::size_t pos = 0;
  while (pos < manifest_text.size()) {
    const std::size_t eol = manifest_text.find('\n', pos);
    if (eol == std::string::npos) throw ArchiveError(r.path + ": malformed manifest record");
    const std::string line = manifest_text.substr(pos, eol - pos);
    pos = eol + 1;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ArchiveError(r.path + ": malformed manifest line '" + line + "'");
    out.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }

  const std::uint64_t count = r.take_u64("array count");
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::uint32_t name_len = r.take_u32("array name length");
    std::string name(name_len, '\0');
    r.take(name.data(), name_len, "array name");
    const std::uint64_t n = r.take_u64("array length");
    std::vector<unsigned char> raw(n * 4);
    if (n) r.take(raw.data(), raw.size(), ("array '" + name + "'").c_str());
    std::vector<float> values(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
      std::memcpy(&values[i], &bits, 4);
    }
    out.arrays.emplace_back(std::move(name), std::move(values));
  }

  const std::uint64_t expected = r.sum.h;  // digest of everything before the trailer
  unsigned char b[8];
  r.is.read(reinterpret_cast<char*>(b), 8);
  if (r.is.gcount() != 8) throw ArchiveError(r.path + ": truncated archive while reading checksum");
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  if (stored != expected)
    throw ArchiveError(r.path + ": checksum mismatch — archive is corrupt");
  char extra;
  if (r.is.read(&extra, 1); r.is.gcount() != 0)
    throw ArchiveError(r.path + ": trailing bytes after checksum");
  return out;
}

}  // namespace pip
