#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eri/data_io.hpp"
#include "eri/training.hpp"

namespace eri {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Flat key=value lines; '#' starts a comment. Keys are not validated here.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

bool is_config_key(const std::string& key);

// Fully resolved run: defaults, then the micro preset (if micro=1), then every
// explicit key in order. Unknown keys and bad values are usage errors naming
// the key.
struct RunConfig {
  TrainOptions train;
  std::string data;  // manifest path
  std::string out;   // run directory
  std::string backbone_weights;
  bool micro = false;

  static RunConfig resolve(const KeyValues& pairs);
  KeyValues to_pairs() const;  // complete snapshot; resolve(to_pairs()) reproduces the run
};

struct RunArtifacts {
  fs::path config;      // config.txt
  fs::path history;     // history.csv
  fs::path best;        // checkpoint.best
  fs::path last;        // checkpoint.last
  TrainResult result;
};

RunArtifacts run_training(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

MetricReport evaluate_checkpoint(const Checkpoint& checkpoint, const fs::path& manifest, Split split);

// Markdown summary of a history and an optional metric report.
std::string render_report(const TrainHistory& history, const std::optional<MetricReport>& report);

}  // namespace eri
