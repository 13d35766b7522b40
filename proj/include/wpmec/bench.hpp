#pragma once

#include <string>
#include <vector>

#include "wpmec/trainer.hpp"

namespace wpmec {

// One experiment = one online training run written to an output directory:
// config.json (resolved configuration), metrics.csv (deterministic per-frame
// values), timing.csv (wall-clock decision times, excluded from metrics.csv
// so reruns are byte-identical), summary.json (run-level averages).
struct ExperimentConfig {
  int devices = 10;
  long frames = -1;  // -1 -> 10000 below 20 devices, 30000 at 20 and above
  std::string algo = "rnn-ugq";  // {dnn,rnn}-{op,ugq}, qdnn-ugq, qattn-ugq
  int candidates = 0;            // 0 -> devices
  double sigma = 0.1;
  std::uint64_t seed = 1;
  std::string out_dir;     // empty -> run-<algo>-n<devices>-seed<seed>
  std::string params_file;  // optional JSON overlay onto SystemParams
  std::string reference = "auto";  // exhaustive | local-search | auto
  long checkpoint_every = 5000;

  // Applies defaults, splits algo into (variant, quantizer), loads the params
  // overlay and prefixes out_dir with $WPMEC_OUT_ROOT when that is set and the
  // path is relative.  Throws std::invalid_argument on bad fields.
  RunConfig resolve() const;
  std::string resolved_out_dir() const;
  long resolved_frames() const;
};

struct RunSummary {
  long frames = 0;
  double average_normalized_rate = 0.0;  // meaningful only when frames > 0
  double average_decision_time_s = 0.0;
  double total_time_s = 0.0;
};

// Runs the experiment and writes the four output files; returns the summary.
RunSummary run_experiment(const ExperimentConfig& cfg);

// Trailing mean over min(window, index+1) points.
std::vector<double> moving_average(const std::vector<double>& series, int window);

struct ComparisonRow {
  std::string dir;
  std::string algo;
  int devices = 0;
  long frames = 0;
  double average_normalized_rate = 0.0;
  double average_decision_time_s = 0.0;
};

// Reads <dir>/summary.json from each directory, skipping unreadable ones with
// a warning on stderr; rows sorted by average normalized rate descending.
std::vector<ComparisonRow> compare_runs(const std::vector<std::string>& dirs);

// Renders the table (fixed column layout) and, when csv_path is nonempty,
// writes it as CSV.
std::string format_comparison(const std::vector<ComparisonRow>& rows,
                              const std::string& csv_path = "");

}  // namespace wpmec
