#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "gcdlab/error.hpp"
#include "gcdlab/experiment.hpp"
#include "gcdlab/format.hpp"
#include "gcdlab/trainer.hpp"

namespace gcdlab {

namespace {

std::string tag_number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::ostringstream out;
    out << static_cast<long long>(v) << ".0";
    return out.str();
  }
  return format_double(v);
}

template <typename T>
std::vector<T> or_base(const std::vector<T>& values, T base) {
  return values.empty() ? std::vector<T>{base} : values;
}

struct RunOutcome {
  bool ok = false;
  std::string error;
  std::vector<EpochMetrics> history;
  bool lr_capped = false;
};

void write_summary(const std::filesystem::path& path, const std::vector<RunPlan>& plans,
                   const std::vector<RunOutcome>& outcomes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "# gcdlab-summary v1\n";
  out << "tag,status,epochs,final_acc_all,final_acc_old,final_acc_new,best_acc_all,best_acc_old,"
         "best_acc_new,final_known_count,lr_capped\n";
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const RunOutcome& r = outcomes[i];
    out << plans[i].tag << ',' << (r.ok ? "ok" : "failed");
    if (!r.ok || r.history.empty()) {
      out << ',' << r.history.size() << ",,,,,,,,\n";
      continue;
    }
    const EpochMetrics& last = r.history.back();
    double best_all = 0.0, best_old = 0.0, best_new = 0.0;
    for (const auto& m : r.history) {
      best_all = std::max(best_all, m.acc_all);
      best_old = std::max(best_old, m.acc_old);
      best_new = std::max(best_new, m.acc_new);
    }
    out << ',' << r.history.size() << ',' << format_double(last.acc_all) << ','
        << format_double(last.acc_old) << ',' << format_double(last.acc_new) << ','
        << format_double(best_all) << ',' << format_double(best_old) << ','
        << format_double(best_new) << ',' << last.known_count << ',' << (r.lr_capped ? 1 : 0)
        << '\n';
  }
}

void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".gcdlab_write_probe";
  {
    std::ofstream out(probe, std::ios::binary | std::ios::trunc);
    if (!out || !(out << "ok")) throw Error("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

}  // namespace

int threads_from_env() {
  const char* env = std::getenv("GCDLAB_THREADS");
  if (env == nullptr) return 1;
  try {
    const int n = std::stoi(env);
    return std::max(n, 1);
  } catch (const std::exception&) {
    return 1;
  }
}

std::vector<RunPlan> expand_grid(const ExperimentConfig& cfg) {
  const std::vector<std::string> ablations =
      cfg.ablation.empty() ? std::vector<std::string>{""} : cfg.ablation;
  std::vector<RunPlan> plans;
  for (const auto& ablation : ablations) {
    for (double beta : or_base(cfg.sweep.beta, cfg.train.beta)) {
      for (double delta : or_base(cfg.sweep.delta, cfg.train.delta)) {
        for (std::uint64_t seed : or_base(cfg.sweep.seed, cfg.train.seed)) {
          RunPlan plan;
          plan.train = cfg.train;
          plan.train.beta = beta;
          plan.train.delta = delta;
          plan.train.seed = seed;
          if (!ablation.empty()) plan.train.toggles = ablation_toggles(ablation);
          plan.tag = (ablation.empty() ? "" : ablation + "_") + "beta" + tag_number(beta) +
                     "_delta" + tag_number(delta) + "_seed" + std::to_string(seed);
          plans.push_back(std::move(plan));
        }
      }
    }
  }
  return plans;
}

GcdDataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.source == DatasetSpec::Source::csv) return read_dataset_csv(spec.csv_path);
  SyntheticSpec s = spec.synthetic;
  s.seed = seed;
  return generate_dataset(s);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kMetricsSchemaTag << '\n' << kMetricsHeader << '\n';
  for (const auto& m : history) {
    const LossBreakdown& l = m.loss;
    out << m.epoch << ',' << format_double(m.acc_all) << ',' << format_double(m.acc_old) << ','
        << format_double(m.acc_new) << ',' << format_double(l.total) << ','
        << format_double(l.rep_unsup) << ',' << format_double(l.rep_sup) << ','
        << format_double(l.cls_unsup) << ',' << format_double(l.cls_sup) << ','
        << format_double(l.mean_entropy) << ',' << format_double(l.dkl) << ','
        << format_double(l.ler) << ',' << m.known_count << ',' << format_double(m.lr) << ','
        << format_double(m.tau_t) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kMetricsHeader) throw ParseError("unexpected metrics header", line_no);
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 15) throw ParseError("expected 15 fields", line_no);
    auto num = [&](std::size_t i) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
      if (ec != std::errc() || ptr != cells[i].data() + cells[i].size()) {
        throw ParseError("bad number '" + cells[i] + "'", line_no);
      }
      return v;
    };
    EpochMetrics m;
    m.epoch = static_cast<int>(num(0));
    m.acc_all = num(1);
    m.acc_old = num(2);
    m.acc_new = num(3);
    m.loss.total = num(4);
    m.loss.rep_unsup = num(5);
    m.loss.rep_sup = num(6);
    m.loss.cls_unsup = num(7);
    m.loss.cls_sup = num(8);
    m.loss.mean_entropy = num(9);
    m.loss.dkl = num(10);
    m.loss.ler = num(11);
    m.known_count = static_cast<std::size_t>(num(12));
    m.lr = num(13);
    m.tau_t = num(14);
    out.push_back(m);
  }
  if (!header_seen) throw ParseError("metrics file has no header");
  return out;
}

int run_experiment(const ExperimentConfig& cfg, const Logger& log, std::optional<int> threads) {
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    log(msg);
  };

  try {
    ensure_writable(cfg.output_dir);
  } catch (const Error& e) {
    say(e.what());
    return 1;
  }
  const std::vector<RunPlan> plans = expand_grid(cfg);
  std::vector<RunOutcome> outcomes(plans.size());

  auto run_one = [&](std::size_t index) {
    const RunPlan& plan = plans[index];
    RunOutcome& outcome = outcomes[index];
    try {
      const std::filesystem::path dir = cfg.output_dir / plan.tag;
      std::filesystem::create_directories(dir);
      {
        ExperimentConfig resolved = cfg;
        resolved.train = plan.train;
        resolved.sweep = {};
        resolved.ablation.clear();
        std::ofstream(dir / "config.yaml", std::ios::binary | std::ios::trunc) << serialize_config(resolved);
      }
      const GcdDataset dataset = load_dataset(cfg.dataset, plan.train.seed);
      TrainHooks hooks;
      hooks.checkpoint_every = cfg.checkpoint_every;
      hooks.checkpoint_dir = dir;
      hooks.config_hash = config_hash(plan.train);
      hooks.log = [&](const std::string& msg) { say("[" + plan.tag + "] " + msg); };
      const TrainState state = train(dataset, plan.train, hooks);
      write_metrics_csv(dir / ("metrics_" + plan.tag + ".csv"), state.history);
      save_checkpoint(dir / "checkpoint_final.bin", state.params, hooks.config_hash);
      outcome.history = state.history;
      outcome.lr_capped = state.lr_capped;
      outcome.ok = true;
      if (!state.history.empty()) {
        const auto& m = state.history.back();
        say("[" + plan.tag + "] done: all=" + format_double(m.acc_all) +
            " old=" + format_double(m.acc_old) + " new=" + format_double(m.acc_new));
      } else {
        say("[" + plan.tag + "] done (0 epochs)");
      }
    } catch (const std::exception& e) {
      outcome.ok = false;
      outcome.error = e.what();
      say("[" + plan.tag + "] failed: " + e.what());
    }
  };

  const int workers = std::clamp(threads.value_or(threads_from_env()), 1,
                                 static_cast<int>(std::max<std::size_t>(plans.size(), 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < plans.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < plans.size(); i = next++) run_one(i);
      });
    }
  }

  try {
    write_summary(cfg.output_dir / "summary.csv", plans, outcomes);
  } catch (const Error& e) {
    say(e.what());
    return 1;
  }
  const bool all_ok = std::all_of(outcomes.begin(), outcomes.end(), [](const RunOutcome& o) { return o.ok; });
  return all_ok ? 0 : 1;
}

}  // namespace gcdlab
