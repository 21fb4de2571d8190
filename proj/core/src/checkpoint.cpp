#include "reachlab/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "reachlab/errors.hpp"

namespace reachlab {
namespace {

constexpr const char* kFormat = "reachlab-checkpoint";
constexpr int kVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& stem,
                                  const char* suffix) {
  std::filesystem::path p = stem;
  p += suffix;
  return p;
}

void put_le32(std::ostream& os, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(u & 0xff),
                         static_cast<char>((u >> 8) & 0xff),
                         static_cast<char>((u >> 16) & 0xff),
                         static_cast<char>((u >> 24) & 0xff)};
  os.write(bytes, 4);
}

float get_le32(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const CheckpointBlock& Checkpoint::find(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw Error("checkpoint has no block named '" + name + "'");
}

void write_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto bin_path = with_suffix(stem, ".bin");
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot open " + bin_path.string() + " for writing");

  nlohmann::json blocks = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : ckpt.blocks) {
    if (element_count(b.shape) != static_cast<std::int64_t>(b.data.size())) {
      throw ShapeError("checkpoint block '" + b.name + "' shape/data mismatch");
    }
    for (float f : b.data) put_le32(bin, f);
    const std::uint64_t bytes = 4ULL * b.data.size();
    blocks.push_back({{"name", b.name},
                      {"shape", b.shape},
                      {"offset", offset},
                      {"bytes", bytes}});
    offset += bytes;
  }
  bin.close();

  nlohmann::json manifest = {
      {"format", kFormat},
      {"version", kVersion},
      {"dtype", "float32"},
      {"endianness", "little"},
      {"data_file", bin_path.filename().string()},
      {"total_bytes", offset},
      {"blocks", blocks},
      {"attributes", ckpt.attributes},
  };
  const auto json_path = with_suffix(stem, ".json");
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw Error("cannot open " + json_path.string() + " for writing");
  js << manifest.dump(2) << "\n";
}

Checkpoint read_checkpoint(const std::filesystem::path& stem) {
  const auto json_path = with_suffix(stem, ".json");
  std::ifstream js(json_path);
  if (!js) throw Error("cannot open checkpoint manifest " + json_path.string());
  const nlohmann::json manifest = nlohmann::json::parse(js);
  if (manifest.value("format", "") != kFormat) {
    throw Error(json_path.string() + " is not a reachlab checkpoint manifest");
  }
  if (manifest.value("dtype", "") != "float32" ||
      manifest.value("endianness", "") != "little") {
    throw Error("unsupported checkpoint encoding in " + json_path.string());
  }
  const auto bin_path =
      json_path.parent_path() / manifest.at("data_file").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error("cannot open checkpoint payload " + bin_path.string());
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(bin)),
                                     std::istreambuf_iterator<char>());

  Checkpoint out;
  out.attributes = manifest.value("attributes", nlohmann::json::object());
  for (const auto& jb : manifest.at("blocks")) {
    CheckpointBlock b;
    b.name = jb.at("name").get<std::string>();
    b.shape = jb.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = jb.at("offset").get<std::uint64_t>();
    const auto bytes = jb.at("bytes").get<std::uint64_t>();
    if (bytes != 4ULL * static_cast<std::uint64_t>(element_count(b.shape)) ||
        offset + bytes > payload.size()) {
      throw Error("checkpoint block '" + b.name + "' is out of range");
    }
    b.data.resize(bytes / 4);
    for (std::size_t i = 0; i < b.data.size(); ++i) {
      b.data[i] = get_le32(payload.data() + offset + 4 * i);
    }
    out.blocks.push_back(std::move(b));
  }
  return out;
}

nlohmann::json shape_to_json(const MlpShape& shape) {
  return {{"widths", shape.widths},
          {"head", shape.head == Head::kGaussian ? "gaussian" : "identity"}};
}

MlpShape shape_from_json(const nlohmann::json& j) {
  MlpShape s;
  s.widths = j.at("widths").get<std::vector<int>>();
  s.head = j.at("head").get<std::string>() == "gaussian" ? Head::kGaussian
                                                         : Head::kIdentity;
  return s;
}

template <typename T>
void append_network(Checkpoint& ckpt, const std::string& prefix, const Mlp<T>& net) {
  const MlpShape& shape = net.shape();
  ckpt.attributes[prefix] = shape_to_json(shape);
  for (int l = 0; l < shape.layer_count(); ++l) {
    const auto w_off = shape.weight_offset(l);
    const auto b_off = shape.bias_offset(l);
    const auto end = shape.weight_offset(l + 1);
    CheckpointBlock w{prefix + "/l" + std::to_string(l) + "/weight",
                      {shape.widths[l + 1], shape.widths[l]},
                      {}};
    CheckpointBlock b{prefix + "/l" + std::to_string(l) + "/bias",
                      {shape.widths[l + 1]},
                      {}};
    for (auto i = w_off; i < b_off; ++i) w.data.push_back(static_cast<float>(net.params()[i]));
    for (auto i = b_off; i < end; ++i) b.data.push_back(static_cast<float>(net.params()[i]));
    ckpt.blocks.push_back(std::move(w));
    ckpt.blocks.push_back(std::move(b));
  }
}

template <typename T>
Mlp<T> load_network(const Checkpoint& ckpt, const std::string& prefix) {
  Mlp<T> net(shape_from_json(ckpt.attributes.at(prefix)));
  const MlpShape& shape = net.shape();
  for (int l = 0; l < shape.layer_count(); ++l) {
    const auto& w = ckpt.find(prefix + "/l" + std::to_string(l) + "/weight");
    const auto& b = ckpt.find(prefix + "/l" + std::to_string(l) + "/bias");
    const auto w_off = shape.weight_offset(l);
    const auto b_off = shape.bias_offset(l);
    if (w.data.size() != b_off - w_off ||
        b.data.size() != shape.weight_offset(l + 1) - b_off) {
      throw ShapeError("checkpoint layer " + std::to_string(l) + " of '" + prefix +
                       "' has the wrong size");
    }
    for (std::size_t i = 0; i < w.data.size(); ++i) net.params()[w_off + i] = w.data[i];
    for (std::size_t i = 0; i < b.data.size(); ++i) net.params()[b_off + i] = b.data[i];
  }
  return net;
}

template <typename T>
void append_ensemble(Checkpoint& ckpt, const std::string& prefix,
                     const MlpEnsemble<T>& ensemble) {
  nlohmann::json attr = shape_to_json(ensemble.shape());
  attr["members"] = ensemble.size();
  ckpt.attributes[prefix] = attr;
  const auto p = static_cast<std::int64_t>(ensemble.shape().param_count());
  for (int i = 0; i < ensemble.size(); ++i) {
    CheckpointBlock b{prefix + "/member" + std::to_string(i), {p}, {}};
    b.data.reserve(static_cast<std::size_t>(p));
    for (std::int64_t j = 0; j < p; ++j) {
      b.data.push_back(static_cast<float>(ensemble.params()(j, i)));
    }
    ckpt.blocks.push_back(std::move(b));
  }
}

template <typename T>
MlpEnsemble<T> load_ensemble(const Checkpoint& ckpt, const std::string& prefix) {
  const auto& attr = ckpt.attributes.at(prefix);
  MlpEnsemble<T> e(shape_from_json(attr), attr.at("members").get<int>());
  const auto p = e.shape().param_count();
  for (int i = 0; i < e.size(); ++i) {
    const auto& b = ckpt.find(prefix + "/member" + std::to_string(i));
    if (b.data.size() != p) {
      throw ShapeError("checkpoint member block of '" + prefix + "' has the wrong size");
    }
    for (std::size_t j = 0; j < p; ++j) e.params()(static_cast<Eigen::Index>(j), i) = b.data[j];
  }
  return e;
}

template void append_network<float>(Checkpoint&, const std::string&, const Mlp<float>&);
template void append_network<double>(Checkpoint&, const std::string&, const Mlp<double>&);
template Mlp<float> load_network<float>(const Checkpoint&, const std::string&);
template Mlp<double> load_network<double>(const Checkpoint&, const std::string&);
template void append_ensemble<float>(Checkpoint&, const std::string&, const MlpEnsemble<float>&);
template void append_ensemble<double>(Checkpoint&, const std::string&, const MlpEnsemble<double>&);
template MlpEnsemble<float> load_ensemble<float>(const Checkpoint&, const std::string&);
template MlpEnsemble<double> load_ensemble<double>(const Checkpoint&, const std::string&);

}  // namespace reachlab
