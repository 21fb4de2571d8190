#ifndef REACHLAB_CHECKPOINT_HPP_
#define REACHLAB_CHECKPOINT_HPP_

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reachlab/mlp.hpp"

namespace reachlab {

// A checkpoint is a pair of files: `<stem>.json` (manifest) and `<stem>.bin`
// (payload). The manifest lists each block's name, shape, byte offset and byte
// length; the payload holds the blocks back to back as little-endian IEEE-754
// 32-bit floats. `attributes` carries free-form metadata (architectures, etc.).
struct CheckpointBlock {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::vector<CheckpointBlock> blocks;
  nlohmann::json attributes = nlohmann::json::object();

  const CheckpointBlock& find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& stem);

nlohmann::json shape_to_json(const MlpShape& shape);
MlpShape shape_from_json(const nlohmann::json& j);

// Single networks are stored one block per layer tensor
// (`<prefix>/l<i>/weight` with shape [out, in] and `<prefix>/l<i>/bias`).
template <typename T>
void append_network(Checkpoint& ckpt, const std::string& prefix, const Mlp<T>& net);
template <typename T>
Mlp<T> load_network(const Checkpoint& ckpt, const std::string& prefix);

// Ensembles are stored one flat block per member (`<prefix>/member<i>`).
template <typename T>
void append_ensemble(Checkpoint& ckpt, const std::string& prefix,
                     const MlpEnsemble<T>& ensemble);
template <typename T>
MlpEnsemble<T> load_ensemble(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace reachlab

#endif  // REACHLAB_CHECKPOINT_HPP_
