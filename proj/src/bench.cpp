#include "wpmec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace wpmec {

namespace {

using nlohmann::json;

// Shortest round-trip decimal for a double; locale-independent.
std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct AlgoSpec {
  const char* name;
  const char* variant;
  const char* quantizer;
};

constexpr AlgoSpec kAlgos[] = {
    {"dnn-op", "dnn", "op"},        {"dnn-ugq", "dnn", "ugq"},
    {"rnn-op", "rnn", "op"},        {"rnn-ugq", "rnn", "ugq"},
    {"qdnn-ugq", "quantum_dnn", "ugq"}, {"qattn-ugq", "quantum_attention", "ugq"},
};

const AlgoSpec& lookup_algo(const std::string& algo) {
  for (const AlgoSpec& s : kAlgos)
    if (algo == s.name) return s;
  throw std::invalid_argument("unknown algo '" + algo +
                              "' (expected dnn-op, dnn-ugq, rnn-op, rnn-ugq, "
                              "qdnn-ugq or qattn-ugq)");
}

ReferenceMode lookup_reference(const std::string& name) {
  if (name == "exhaustive") return ReferenceMode::exhaustive;
  if (name == "local-search") return ReferenceMode::local_search;
  if (name == "auto") return ReferenceMode::automatic;
  throw std::invalid_argument("unknown reference mode '" + name +
                              "' (expected exhaustive, local-search or auto)");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

long ExperimentConfig::resolved_frames() const {
  if (frames >= 0) return frames;
  return devices < 20 ? 10000 : 30000;
}

std::string ExperimentConfig::resolved_out_dir() const {
  std::string dir = out_dir;
  if (dir.empty())
    dir = "run-" + algo + "-n" + std::to_string(devices) + "-seed" + std::to_string(seed);
  const char* root = std::getenv("WPMEC_OUT_ROOT");
  if (root && *root && std::filesystem::path(dir).is_relative())
    dir = (std::filesystem::path(root) / dir).string();
  return dir;
}

RunConfig ExperimentConfig::resolve() const {
  if (devices < 1) throw std::invalid_argument("devices must be >= 1");
  if (candidates < 0) throw std::invalid_argument("candidates must be >= 0 (0 -> devices)");
  const AlgoSpec& spec = lookup_algo(algo);
  RunConfig rc;
  RandomStream dist_rng(seed, "distances");
  rc.params = SystemParams::defaults(devices, dist_rng);
  if (!params_file.empty()) rc.params.merge_json(read_file(params_file));
  rc.params.validate();
  rc.variant = spec.variant;
  rc.quantizer = spec.quantizer;
  rc.candidates_K = candidates == 0 ? devices : candidates;
  rc.sigma = sigma;
  rc.frames = resolved_frames();
  rc.seed = seed;
  rc.reference = lookup_reference(reference);
  rc.checkpoint_every = checkpoint_every;
  return rc;
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  RunConfig rc = cfg.resolve();
  const std::string out = cfg.resolved_out_dir();
  std::filesystem::create_directories(out);
  rc.checkpoint_dir = out + "/checkpoints";

  json jc;
  jc["algo"] = cfg.algo;
  jc["variant"] = rc.variant;
  jc["quantizer"] = rc.quantizer;
  jc["devices"] = cfg.devices;
  jc["frames"] = rc.frames;
  jc["candidates"] = rc.candidates_K;
  jc["sigma"] = rc.sigma;
  jc["seed"] = rc.seed;
  jc["reference"] = cfg.reference;
  jc["train_every"] = rc.train_every;
  jc["batch_size"] = rc.batch_size;
  jc["buffer_capacity"] = rc.buffer_capacity;
  jc["checkpoint_every"] = rc.checkpoint_every;
  jc["out_dir"] = out;
  jc["params"] = json::parse(rc.params.to_json());
  {
    std::ofstream f(out + "/config.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out + "/config.json");
    f << jc.dump(2) << "\n";
  }

  std::ofstream metrics(out + "/metrics.csv", std::ios::binary);
  std::ofstream timing(out + "/timing.csv", std::ios::binary);
  if (!metrics || !timing) throw std::runtime_error("cannot write CSV outputs in " + out);
  metrics << "frame,chosen_value,reference_value,normalized_rate,loss\n";
  timing << "frame,decision_time_s\n";

  double sum_norm = 0.0, sum_time = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  OnlineTrainer trainer(rc);
  trainer.run([&](const FrameMetrics& fm) {
    metrics << fm.frame_index << ',' << g17(fm.chosen_value) << ','
            << g17(fm.reference_value) << ',' << g17(fm.normalized_rate) << ',';
    if (fm.trained) metrics << g17(fm.training_loss);
    metrics << '\n';
    timing << fm.frame_index << ',' << g17(fm.decision_time_s) << '\n';
    sum_norm += fm.normalized_rate;
    sum_time += fm.decision_time_s;
  });
  const double total_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunSummary summary;
  summary.frames = rc.frames;
  summary.total_time_s = total_s;
  if (rc.frames > 0) {
    summary.average_normalized_rate = sum_norm / static_cast<double>(rc.frames);
    summary.average_decision_time_s = sum_time / static_cast<double>(rc.frames);
  }

  json js;
  js["algo"] = cfg.algo;
  js["devices"] = cfg.devices;
  js["frames"] = rc.frames;
  js["seed"] = rc.seed;
  js["average_normalized_rate"] =
      rc.frames > 0 ? json(summary.average_normalized_rate) : json(nullptr);
  js["average_decision_time_s"] =
      rc.frames > 0 ? json(summary.average_decision_time_s) : json(nullptr);
  js["total_time_s"] = total_s;
  {
    std::ofstream f(out + "/summary.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out + "/summary.json");
    f << js.dump(2) << "\n";
  }
  return summary;
}

std::vector<double> moving_average(const std::vector<double>& series, int window) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  std::vector<double> out;
  out.reserve(series.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc += series[i];
    if (i >= static_cast<std::size_t>(window)) acc -= series[i - window];
    const double count = static_cast<double>(std::min<std::size_t>(window, i + 1));
    out.push_back(acc / count);
  }
  return out;
}

std::vector<ComparisonRow> compare_runs(const std::vector<std::string>& dirs) {
  std::vector<ComparisonRow> rows;
  for (const std::string& dir : dirs) {
    try {
      json j = json::parse(read_file(dir + "/summary.json"));
      if (j.at("average_normalized_rate").is_null()) {
        std::cerr << "warning: " << dir << " has no frames; skipped\n";
        continue;
      }
      ComparisonRow row;
      row.dir = dir;
      row.algo = j.value("algo", std::string("?"));
      row.devices = j.value("devices", 0);
      row.frames = j.value("frames", 0L);
      row.average_normalized_rate = j.at("average_normalized_rate").get<double>();
      row.average_decision_time_s = j.value("average_decision_time_s", 0.0);
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << dir << ": " << e.what() << "\n";
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.average_normalized_rate > b.average_normalized_rate;
  });
  return rows;
}

std::string format_comparison(const std::vector<ComparisonRow>& rows,
                              const std::string& csv_path) {
  std::ostringstream text;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %8s %8s %22s %22s\n", "run", "devices", "frames",
                "avg_normalized_rate", "avg_decision_time_s");
  text << line;
  for (const ComparisonRow& r : rows) {
    std::snprintf(line, sizeof line, "%-28s %8d %8ld %22.6f %22.9f\n", r.algo.c_str(),
                  r.devices, r.frames, r.average_normalized_rate, r.average_decision_time_s);
    text << line;
  }
  if (!csv_path.empty()) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + csv_path);
    f << "dir,algo,devices,frames,average_normalized_rate,average_decision_time_s\n";
    for (const ComparisonRow& r : rows)
      f << r.dir << ',' << r.algo << ',' << r.devices << ',' << r.frames << ','
        << g17(r.average_normalized_rate) << ',' << g17(r.average_decision_time_s) << '\n';
  }
  return text.str();
}

}  // namespace wpmec
