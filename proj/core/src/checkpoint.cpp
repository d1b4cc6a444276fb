#include "lumina/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lumina {

static_assert(std::endian::native == std::endian::little,
              "checkpoint code assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'U', 'M', 'N'};
constexpr uint32_t kVersion = 1;

std::string shape_token(const Shape& s) {
  std::ostringstream os;
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  return os.str();
}

Shape parse_shape_token(const std::string& token) {
  Shape s;
  size_t pos = 0;
  while (pos < token.size()) {
    size_t next = token.find('x', pos);
    if (next == std::string::npos) next = token.size();
    const std::string part = token.substr(pos, next - pos);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "malformed shape token '" + token + "'");
    s.push_back(std::stoi(part));
    pos = next + 1;
  }
  if (s.empty())
    throw CheckpointError(CheckpointError::Kind::manifest, "empty shape token");
  return s;
}

}  // namespace

void checkpoint_save(const ModelParams<float>& params,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw CheckpointError(CheckpointError::Kind::io,
                          "cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  const uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);

  std::ostringstream manifest;
  for (const ParamSpec& spec : architecture_table())
    manifest << spec.path << " f32 " << shape_token(spec.shape) << "\n";
  manifest << "\n";
  const std::string mtext = manifest.str();
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));

  for (const ParamSpec& spec : architecture_table()) {
    const Tensor<float>& t = params.at(spec.path);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  out.flush();
  if (!out)
    throw CheckpointError(CheckpointError::Kind::io,
                          "write to '" + path.string() + "' failed");
}

ModelParams<float> checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointError::Kind::io,
                          "cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::magic,
                          "'" + path.string() + "' has no LUMN magic header");
  uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::version,
                          "unsupported checkpoint version " + std::to_string(version));

  // Manifest: lines until the blank terminator.
  size_t pos = 8;
  std::vector<std::pair<std::string, Shape>> entries;
  while (true) {
    const size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos)
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "manifest is missing its blank-line terminator");
    const std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    std::istringstream ls(line);
    std::string ppath, dtype, shape_tok, extra;
    if (!(ls >> ppath >> dtype >> shape_tok) || (ls >> extra))
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "malformed manifest line '" + line + "'");
    if (dtype != "f32")
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "unsupported dtype '" + dtype + "' for '" + ppath + "'");
    entries.emplace_back(ppath, parse_shape_token(shape_tok));
  }

  // Validate against the architecture table: exact cover, exact shapes.
  std::map<std::string, Shape> expected;
  for (const ParamSpec& spec : architecture_table()) expected.emplace(spec.path, spec.shape);
  std::set<std::string> seen;
  for (const auto& [ppath, shape] : entries) {
    auto it = expected.find(ppath);
    if (it == expected.end())
      throw CheckpointError(CheckpointError::Kind::shape,
                            "manifest path '" + ppath +
                                "' is not in the architecture table");
    if (!seen.insert(ppath).second)
      throw CheckpointError(CheckpointError::Kind::shape,
                            "manifest lists '" + ppath + "' twice");
    if (it->second != shape)
      throw CheckpointError(CheckpointError::Kind::shape,
                            "shape mismatch for '" + ppath + "': manifest " +
                                shape_token(shape) + ", architecture " +
                                shape_token(it->second));
  }
  for (const auto& [ppath, shape] : expected)
    if (!seen.count(ppath))
      throw CheckpointError(CheckpointError::Kind::shape,
                            "manifest is missing parameter '" + ppath + "'");

  int64_t total = 0;
  for (const auto& [ppath, shape] : entries) total += numel(shape);
  const size_t need = static_cast<size_t>(total) * sizeof(float);
  if (bytes.size() - pos < need)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "checkpoint holds " + std::to_string(bytes.size() - pos) +
                              " payload bytes, manifest needs " + std::to_string(need));
  if (bytes.size() - pos > need)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "checkpoint has " +
                              std::to_string(bytes.size() - pos - need) +
                              " trailing bytes beyond the manifest payload");

  ModelParams<float> params;
  for (const auto& [ppath, shape] : entries) {
    std::vector<float> vals(static_cast<size_t>(numel(shape)));
    std::memcpy(vals.data(), bytes.data() + pos, vals.size() * sizeof(float));
    pos += vals.size() * sizeof(float);
    params.tensors.emplace(ppath, Tensor<float>(shape, std::move(vals)));
  }
  return params;
}

}  // namespace lumina
