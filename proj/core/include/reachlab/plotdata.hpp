#ifndef REACHLAB_PLOTDATA_HPP_
#define REACHLAB_PLOTDATA_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace reachlab {

// Plot ids understood by emit_plotdata, with the columns each one writes:
//   q_growth    epoch, mean_q, max_q, oracle_max_value
//   reward_field   x, y, reward
//   eval_curve   epoch, eval_return, eval_fraction, mode
//   q_curve   epoch, mean_q, mode
//   critic_spread    x, y, ensemble_std, reach_label
//   rollout_traces    epoch, traj, t, x, y
//   policy  x, y, a_x, a_y, reach_label     (final deterministic policy)
const std::vector<std::string>& plot_ids();

// Writes <out_dir>/<id>.csv from the artifacts in `run_dir` and returns its
// path. Unknown ids throw ConfigError. A run without epochs yields a
// header-only file.
std::filesystem::path emit_plotdata(const std::filesystem::path& run_dir, const std::string& id,
                                    const std::filesystem::path& out_dir);

}  // namespace reachlab

#endif  // REACHLAB_PLOTDATA_HPP_
