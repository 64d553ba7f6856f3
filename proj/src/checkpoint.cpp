#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "s2a/error.h"
#include "s2a/m2m_model.h"

namespace s2a {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', '2', 'A', 'M', '2', 'M', '\0', '\1'};
constexpr int kFormatVersion = 1;

nlohmann::json config_to_json(const M2MConfig& c) {
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model},   {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},         {"dropout", c.dropout},   {"n_performers", c.n_performers},
          {"d_embed", c.d_embed},   {"max_seq_len", c.max_seq_len}, {"seed", c.seed},
          {"vocab", c.vocab.sizes()}};
}

M2MConfig config_from_json(const nlohmann::json& j) {
  M2MConfig c;
  c.n_layers = j.at("n_layers");
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.d_ff = j.at("d_ff");
  c.dropout = j.at("dropout");
  c.n_performers = j.at("n_performers");
  c.d_embed = j.at("d_embed");
  c.max_seq_len = j.at("max_seq_len");
  c.seed = j.at("seed");
  const auto sizes = c.vocab.sizes();
  if (j.at("vocab").get<std::vector<int>>() != std::vector<int>(sizes.begin(), sizes.end())) {
    throw DataError("checkpoint vocabulary does not match this build");
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const M2MModel& model) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["config"] = config_to_json(model.config());
  header["tensors"] = nlohmann::json::array();
  model.params().visit([&](const std::string& name, const Mat<float>& m) {
    header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  model.params().visit([&](const std::string&, const Mat<float>& m) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(m.data());
    out.insert(out.end(), bytes, bytes + m.size() * sizeof(float));
  });
  return out;
}

M2MModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not an M2M checkpoint (bad magic)");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{bytes[8 + static_cast<std::size_t>(i)]} << (8 * i);
  if (bytes.size() < 12 + std::size_t{len}) throw DataError("checkpoint header truncated");

  nlohmann::json header;
  M2MConfig config;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    if (header.at("format_version").get<int>() != kFormatVersion) throw DataError("unsupported checkpoint version");
    config = config_from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }

  M2MModel model(config);
  std::size_t pos = 12 + len;
  std::size_t idx = 0;
  const auto& tensors = header.at("tensors");
  model.params().visit([&](const std::string& name, Mat<float>& m) {
    if (idx >= tensors.size() || tensors[idx].at("name") != name || tensors[idx].at("rows") != m.rows() ||
        tensors[idx].at("cols") != m.cols()) {
      throw DataError("checkpoint tensor layout mismatch at " + name);
    }
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(float);
    if (bytes.size() - pos < n) throw DataError("checkpoint data truncated at " + name);
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    ++idx;
  });
  if (pos != bytes.size()) throw DataError("trailing bytes after checkpoint data");
  if (!model.params().all_finite()) throw DataError("checkpoint contains non-finite weights");
  return model;
}

void save_checkpoint(const M2MModel& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

M2MModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace s2a
