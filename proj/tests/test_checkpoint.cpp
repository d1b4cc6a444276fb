#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lumina/checkpoint.hpp"
#include "lumina/data.hpp"
#include "lumina/nets.hpp"

using namespace lumina;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  fs::path p = fs::temp_directory_path() / "lumina_ckpt_tests";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spew(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Splits a well-formed checkpoint into header (8 bytes), manifest lines
/// (without newlines), and payload, so tests can rebuild corrupted variants.
struct Dissected {
  std::string header;
  std::vector<std::string> lines;
  std::string payload;

  std::string assemble() const {
    std::string out = header;
    for (const std::string& l : lines) {
      out += l;
      out += '\n';
    }
    out += '\n';
    out += payload;
    return out;
  }
};

Dissected dissect(const std::string& bytes) {
  Dissected d;
  d.header = bytes.substr(0, 8);
  size_t pos = 8;
  while (true) {
    const size_t eol = bytes.find('\n', pos);
    REQUIRE(eol != std::string::npos);
    const std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    d.lines.push_back(line);
  }
  d.payload = bytes.substr(pos);
  return d;
}

CheckpointError::Kind load_kind(const fs::path& p) {
  try {
    checkpoint_load(p);
  } catch (const CheckpointError& e) {
    return e.kind;
  }
  FAIL("checkpoint_load('" << p.string() << "') did not throw");
  return CheckpointError::Kind::io;
}

}  // namespace

TEST_CASE("save/load round trip is bit-exact") {
  ModelParams<float> params = ModelParams<float>::init(17);
  fs::path p = work_dir() / "roundtrip.ckpt";
  checkpoint_save(params, p);
  ModelParams<float> back = checkpoint_load(p);
  for (const ParamSpec& spec : architecture_table()) {
    const Tensor<float>& a = params.at(spec.path);
    const Tensor<float>& b = back.at(spec.path);
    REQUIRE(a.shape() == b.shape());
    CHECK(std::memcmp(a.data(), b.data(), static_cast<size_t>(a.size()) * 4) == 0);
  }
}

TEST_CASE("identical parameters serialize to identical bytes") {
  ModelParams<float> params = ModelParams<float>::init(23);
  fs::path p1 = work_dir() / "twin1.ckpt";
  fs::path p2 = work_dir() / "twin2.ckpt";
  checkpoint_save(params, p1);
  checkpoint_save(params, p2);
  CHECK(slurp(p1) == slurp(p2));

  // and a second trip through load/save is also a fixed point
  fs::path p3 = work_dir() / "twin3.ckpt";
  checkpoint_save(checkpoint_load(p1), p3);
  CHECK(slurp(p1) == slurp(p3));
}

TEST_CASE("file layout is the documented container") {
  ModelParams<float> params = ModelParams<float>::init(29);
  fs::path p = work_dir() / "layout.ckpt";
  checkpoint_save(params, p);
  const std::string bytes = slurp(p);

  REQUIRE(bytes.size() > 8);
  CHECK(bytes.compare(0, 4, "LUMN") == 0);
  uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1);

  Dissected d = dissect(bytes);
  const auto& table = architecture_table();
  REQUIRE(d.lines.size() == table.size());
  int64_t total = 0;
  for (size_t i = 0; i < table.size(); ++i) {
    std::istringstream ls(d.lines[i]);
    std::string path, dtype, shape_tok;
    REQUIRE((ls >> path >> dtype >> shape_tok));
    CHECK(path == table[i].path);  // manifest follows architecture order
    CHECK(dtype == "f32");
    std::string want;
    for (size_t k = 0; k < table[i].shape.size(); ++k)
      want += (k ? "x" : "") + std::to_string(table[i].shape[k]);
    CHECK(shape_tok == want);
    total += numel(table[i].shape);
  }
  CHECK(static_cast<int64_t>(d.payload.size()) == total * 4);
  CHECK(total == params.param_count());

  // payload is the raw little-endian float data in manifest order
  const Tensor<float>& first = params.at(table[0].path);
  CHECK(std::memcmp(d.payload.data(), first.data(),
                    static_cast<size_t>(first.size()) * 4) == 0);
}

TEST_CASE("corrupted magic and version are rejected") {
  ModelParams<float> params = ModelParams<float>::init(31);
  fs::path good = work_dir() / "good.ckpt";
  checkpoint_save(params, good);
  const std::string bytes = slurp(good);

  fs::path bad = work_dir() / "bad.ckpt";
  std::string magic = bytes;
  magic[0] = 'X';
  spew(bad, magic);
  CHECK(load_kind(bad) == CheckpointError::Kind::magic);

  std::string version = bytes;
  version[4] = 9;
  spew(bad, version);
  CHECK(load_kind(bad) == CheckpointError::Kind::version);

  spew(bad, "LU");  // shorter than the fixed header
  CHECK(load_kind(bad) == CheckpointError::Kind::magic);

  CHECK(load_kind(work_dir() / "never_written.ckpt") == CheckpointError::Kind::io);
}

TEST_CASE("manifest corruption is caught line by line") {
  ModelParams<float> params = ModelParams<float>::init(37);
  fs::path good = work_dir() / "good2.ckpt";
  checkpoint_save(params, good);
  const Dissected d = dissect(slurp(good));
  fs::path bad = work_dir() / "bad2.ckpt";

  // no blank-line terminator: header plus manifest cut mid-line
  spew(bad, d.header + d.lines[0].substr(0, d.lines[0].size() - 2));
  CHECK(load_kind(bad) == CheckpointError::Kind::manifest);

  // wrong dtype
  Dissected v = d;
  v.lines[0] = v.lines[0].substr(0, v.lines[0].find(" f32 ")) + " f64 " +
               v.lines[0].substr(v.lines[0].find(" f32 ") + 5);
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::manifest);

  // extra token on the line
  v = d;
  v.lines[0] += " surplus";
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::manifest);

  // non-numeric shape token
  v = d;
  v.lines[0].back() = 'z';
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::manifest);
}

TEST_CASE("architecture mismatches are shape errors naming the path") {
  ModelParams<float> params = ModelParams<float>::init(41);
  fs::path good = work_dir() / "good3.ckpt";
  checkpoint_save(params, good);
  const Dissected d = dissect(slurp(good));
  fs::path bad = work_dir() / "bad3.ckpt";

  auto message_of = [&](const fs::path& p) -> std::string {
    try {
      checkpoint_load(p);
    } catch (const CheckpointError& e) {
      return e.what();
    }
    return "";
  };

  // unknown path
  Dissected v = d;
  v.lines[0] = "ghost.weight" + v.lines[0].substr(v.lines[0].find(' '));
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::shape);
  CHECK(message_of(bad).find("ghost.weight") != std::string::npos);

  // duplicate path
  v = d;
  v.lines[1] = v.lines[0];
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::shape);
  CHECK(message_of(bad).find("twice") != std::string::npos);

  // missing path
  v = d;
  const std::string dropped = v.lines.back().substr(0, v.lines.back().find(' '));
  v.lines.pop_back();
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::shape);
  CHECK(message_of(bad).find(dropped) != std::string::npos);

  // wrong shape for a known path
  v = d;
  const size_t sp = v.lines[0].rfind(' ');
  v.lines[0] = v.lines[0].substr(0, sp) + " 1x1x1x1";
  spew(bad, v.assemble());
  CHECK(load_kind(bad) == CheckpointError::Kind::shape);
  CHECK(message_of(bad).find("mismatch") != std::string::npos);
}

TEST_CASE("payload size must match the manifest exactly") {
  ModelParams<float> params = ModelParams<float>::init(43);
  fs::path good = work_dir() / "good4.ckpt";
  checkpoint_save(params, good);
  const std::string bytes = slurp(good);
  fs::path bad = work_dir() / "bad4.ckpt";

  spew(bad, bytes.substr(0, bytes.size() - 4));
  CHECK(load_kind(bad) == CheckpointError::Kind::truncated);

  spew(bad, bytes + std::string(4, '\0'));
  CHECK(load_kind(bad) == CheckpointError::Kind::truncated);

  // losing half the payload is still just a truncation
  spew(bad, bytes.substr(0, bytes.size() / 2));
  CHECK(load_kind(bad) == CheckpointError::Kind::truncated);
}

TEST_CASE("loaded parameters drive the model identically") {
  ModelParams<float> params = ModelParams<float>::init(47);
  fs::path p = work_dir() / "drive.ckpt";
  checkpoint_save(params, p);
  ModelParams<float> back = checkpoint_load(p);

  Image base = synth_base_image(16, 16, 3);
  Tensor<float> img = to_tensor<float>(base);
  Decomposition<float> a = enhance(params, img);
  Decomposition<float> b = enhance(back, img);
  CHECK(std::memcmp(a.I_f.data(), b.I_f.data(),
                    static_cast<size_t>(a.I_f.size()) * 4) == 0);
}
