#pragma once

// Experiment pipeline behind the CLI subcommands: run fan-out across worker
// threads, reference-score management, metric tables, the latent probe, and
// figure emission. The acceptance suite drives the same entry points.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "jcpl/config.hpp"
#include "jcpl/metrics.hpp"
#include "jcpl/probe.hpp"
#include "jcpl/store.hpp"
#include "jcpl/svg.hpp"

namespace jcpl {

inline int worker_count() {
  if (const char* env = std::getenv("JCPL_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline std::vector<std::string> expand_methods(const std::string& method) {
  if (method == "all") return {"hidden", "explicit", "predictive_id", "jcpl"};
  parse_mode(method);  // validate
  return {method};
}

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline void log_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(log_mutex());
  std::cout << line << std::endl;
}

// Runs `jobs` callables across the worker pool; returns the failure count.
inline int run_jobs(const std::vector<std::function<void()>>& jobs) {
  const int workers = std::min<int>(worker_count(), static_cast<int>(jobs.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (const std::exception& e) {
        failures.fetch_add(1);
        log_line(std::string("run failed: ") + e.what());
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return failures.load();
}

// --- train ---

inline bool cmd_train(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  const std::string hash = config_hash(cfg);
  std::vector<std::function<void()>> jobs;
  for (const std::string& method : expand_methods(cfg.method)) {
    for (std::uint64_t seed : cfg.seeds) {
      if (fs::exists(store.run_dir(cfg.env, method, hash, seed) / "checkpoint.bin")) {
        log_line("exists " + cfg.env + "/" + method + " seed " + std::to_string(seed) +
                 ", skipping (identical config reproduces identical results)");
        continue;
      }
      jobs.push_back([=] {
        const RunPlan plan = make_run_plan(cfg, method, seed);
        log_line("train " + cfg.env + "/" + method + " seed " + std::to_string(seed));
        const TrainOutput out = train_run(plan);
        persist_run(store, cfg, method, out);
        log_line("done  " + cfg.env + "/" + method + " seed " + std::to_string(seed) +
                 " (" + std::to_string(out.record.wall_seconds) + "s, " +
                 std::to_string(out.record.episode_returns.size()) + " episodes)");
      });
    }
  }
  return run_jobs(jobs) == 0;
}

// --- references ---

// Default-context reference agents share the run store under a dedicated
// method key; existing checkpoints are reused.
inline std::vector<ReferenceRow> ensure_references(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  const fs::path ref_csv = store.references_csv(cfg.env);
  if (fs::exists(ref_csv)) return read_references_csv(ref_csv);

  const EnvId env = parse_env(cfg.env);
  const ContextSet cs = context_sets(env);
  const std::string hash = config_hash(cfg);

  const std::vector<double> random_means = random_reference(
      env, cs.eval, cfg.reference.random_episodes, 0xA11CEULL);

  std::vector<std::function<void()>> jobs;
  std::vector<fs::path> ckpt_paths;
  for (int s = 0; s < cfg.reference.default_seeds; ++s) {
    const fs::path dir = store.run_dir(cfg.env, "reference_default", hash, s);
    ckpt_paths.push_back(dir / "checkpoint.bin");
    if (fs::exists(dir / "checkpoint.bin")) continue;
    jobs.push_back([=] {
      RunPlan plan = make_run_plan(cfg, "hidden", static_cast<std::uint64_t>(s),
                                   {cs.default_context});
      log_line("train " + cfg.env + "/reference_default seed " + std::to_string(s));
      const TrainOutput out = train_run(plan);
      const fs::path rdir = store.run_dir(cfg.env, "reference_default", hash, s);
      fs::create_directories(rdir);
      write_returns_csv(rdir / "returns.csv", out.record);
      save_checkpoint(rdir / "checkpoint.bin", out.ckpt);
    });
  }
  if (run_jobs(jobs) != 0)
    throw std::runtime_error("reference default training failed");

  std::vector<ScoreRow> default_rows;
  for (const fs::path& p : ckpt_paths) {
    const Checkpoint ckpt = load_checkpoint(p);
    const auto rows =
        evaluate_run(ckpt, cs.eval, cfg.eval_episodes, cfg.deterministic_eval);
    default_rows.insert(default_rows.end(), rows.begin(), rows.end());
  }
  write_scores_csv(store.default_scores_csv(cfg.env), default_rows);

  std::vector<ReferenceRow> refs;
  for (std::size_t ci = 0; ci < cs.eval.size(); ++ci) {
    double sum = 0.0;
    long n = 0;
    for (const auto& r : default_rows) {
      if (r.context == cs.eval[ci].value) {
        sum += r.score;
        ++n;
      }
    }
    refs.push_back({cs.eval[ci].value, random_means[ci], n ? sum / n : 0.0});
  }
  write_references_csv(ref_csv, refs);
  return refs;
}

// --- evaluate ---

inline bool cmd_evaluate(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  const EnvId env = parse_env(cfg.env);
  const ContextSet cs = context_sets(env);
  const std::string hash = config_hash(cfg);
  ensure_references(cfg);

  bool all_ok = true;
  for (const std::string& method : expand_methods(cfg.method)) {
    std::vector<ScoreRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path ckpt_path =
          store.run_dir(cfg.env, method, hash, seed) / "checkpoint.bin";
      if (!fs::exists(ckpt_path)) {
        log_line("missing checkpoint for " + cfg.env + "/" + method + " seed " +
                 std::to_string(seed) + "; skipping method");
        all_ok = false;
        rows.clear();
        break;
      }
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const auto seed_rows =
          evaluate_run(ckpt, cs.eval, cfg.eval_episodes, cfg.deterministic_eval);
      rows.insert(rows.end(), seed_rows.begin(), seed_rows.end());
    }
    if (!rows.empty()) {
      write_scores_csv(store.scores_csv(cfg.env, method), rows);
      log_line("scores " + cfg.env + "/" + method + ": " + std::to_string(rows.size()) +
               " rows");
    }
  }
  return all_ok;
}

// --- metrics ---

// Rectangular table from score rows; contexts keep the given order, columns
// are ordered (seed, episode).
inline ScoreTable score_table_from_rows(const std::vector<ScoreRow>& rows,
                                        const std::vector<Context>& contexts) {
  ScoreTable t;
  std::map<std::pair<std::uint64_t, int>, int> col_of;
  for (const auto& r : rows) col_of.emplace(std::make_pair(r.seed, r.episode), 0);
  int next = 0;
  for (auto& [key, idx] : col_of) {
    idx = next++;
    t.col_seed.push_back(key.first);
  }
  for (const Context& c : contexts) {
    std::vector<double> row(col_of.size(),
                            std::numeric_limits<double>::quiet_NaN());
    long filled = 0;
    for (const auto& r : rows) {
      if (r.context == c.value) {
        row[col_of.at({r.seed, r.episode})] = r.score;
        ++filled;
      }
    }
    if (filled != static_cast<long>(col_of.size()))
      throw std::runtime_error("score rows are not rectangular");
    t.contexts.push_back(c.value);
    t.scores.push_back(std::move(row));
  }
  return t;
}

struct MethodMetrics {
  std::string method;
  std::map<std::string, Aggregate> by_subset;  // interpolation, extrapolation, all
  std::vector<double> rejected_contexts;
};

inline std::vector<int> rows_of_subset(const ScoreTable& normalized,
                                       const std::vector<Context>& subset) {
  std::vector<int> idx;
  for (int r = 0; r < normalized.rows(); ++r)
    for (const Context& c : subset)
      if (normalized.contexts[r] == c.value) idx.push_back(r);
  return idx;
}

inline bool cmd_metrics(const ExperimentConfig& cfg, int bootstrap_iterations = 2000,
                        double confidence = 0.95) {
  const StorePaths store{cfg.out_dir};
  const EnvId env = parse_env(cfg.env);
  const ContextSet cs = context_sets(env);
  const auto [inter, extra] = split_eval(cs);
  const std::vector<ReferenceRow> refs = ensure_references(cfg);
  std::vector<double> s_random, s_default;
  for (const auto& r : refs) {
    s_random.push_back(r.s_random);
    s_default.push_back(r.s_default);
  }

  std::vector<MethodMetrics> results;
  std::vector<std::pair<std::string, double>> auc_rows;
  const std::string hash = config_hash(cfg);

  for (const std::string& method : expand_methods(cfg.method)) {
    const fs::path scores_path = store.scores_csv(cfg.env, method);
    if (!fs::exists(scores_path)) {
      log_line("warning: no scores for " + cfg.env + "/" + method + ", row omitted");
      continue;
    }
    const ScoreTable raw = score_table_from_rows(read_scores_csv(scores_path), cs.eval);
    const NormalizedScores norm = normalize(raw, s_random, s_default);
    MethodMetrics mm;
    mm.method = method;
    for (int r : norm.rejected_rows) {
      mm.rejected_contexts.push_back(raw.contexts[r]);
      log_line("warning: degenerate normalization at context " +
               std::to_string(raw.contexts[r]) + " for " + cfg.env + "/" + method);
    }
    auto rng = make_rng(0xB007ULL);
    std::vector<int> all_rows(norm.table.rows());
    for (int i = 0; i < norm.table.rows(); ++i) all_rows[i] = i;
    const std::vector<std::pair<std::string, std::vector<int>>> subsets = {
        {"interpolation", rows_of_subset(norm.table, inter)},
        {"extrapolation", rows_of_subset(norm.table, extra)},
        {"all", all_rows}};
    for (const auto& [name, rows] : subsets) {
      if (rows.empty()) {
        log_line("warning: subset " + name + " has no usable contexts for " + cfg.env +
                 "/" + method);
        mm.by_subset[name] = Aggregate{};
        continue;
      }
      mm.by_subset[name] =
          aggregate_rows(norm.table, rows, bootstrap_iterations, confidence, rng);
    }
    results.push_back(mm);

    // performance profile CSVs over the pooled normalized scores
    for (const auto& [subset_name, subset_rows] :
         std::vector<std::pair<std::string, std::vector<int>>>{
             {"interpolation", rows_of_subset(norm.table, inter)},
             {"extrapolation", rows_of_subset(norm.table, extra)},
             {"all", all_rows}}) {
      if (subset_rows.empty()) continue;
      std::vector<double> pooled;
      for (int r : subset_rows)
        pooled.insert(pooled.end(), norm.table.scores[r].begin(),
                      norm.table.scores[r].end());
      const double lo = *std::min_element(pooled.begin(), pooled.end());
      const double hi = *std::max_element(pooled.begin(), pooled.end());
      std::vector<double> grid;
      for (int i = 0; i <= 100; ++i) grid.push_back(lo + (hi - lo) * i / 100.0);
      const auto profile = performance_profile(pooled, grid);
      auto os = open_out(store.profile_csv(cfg.env, method, subset_name));
      os << "threshold,fraction_above\n";
      for (std::size_t i = 0; i < grid.size(); ++i)
        os << grid[i] << ',' << profile[i] << '\n';
    }

    // training-curve area across this method's run records
    std::vector<std::vector<std::pair<long, double>>> per_seed;
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path returns =
          store.run_dir(cfg.env, method, hash, seed) / "returns.csv";
      if (fs::exists(returns)) per_seed.push_back(read_returns_csv(returns));
    }
    if (!per_seed.empty())
      auc_rows.emplace_back(method, training_auc(per_seed, cfg.sac.total_steps));
  }

  // metrics JSON (one entry per method x subset)
  nlohmann::json out = nlohmann::json::array();
  for (const auto& mm : results) {
    for (const auto& [subset, agg] : mm.by_subset) {
      out.push_back({{"method", mm.method},
                     {"env", cfg.env},
                     {"subset", subset},
                     {"iqm", agg.iqm_value},
                     {"ci_lo", agg.ci.lo},
                     {"ci_hi", agg.ci.hi},
                     {"n", agg.n},
                     {"single_seed", agg.ci.single_seed},
                     {"rejected_contexts", mm.rejected_contexts}});
    }
  }
  {
    auto os = open_out(store.metrics_json(cfg.env));
    os << out.dump(2) << '\n';
  }
  nlohmann::json auc_json = nlohmann::json::array();
  for (const auto& [method, auc] : auc_rows)
    auc_json.push_back({{"method", method}, {"env", cfg.env}, {"auc", auc}});
  {
    auto os = open_out(store.auc_json(cfg.env));
    os << auc_json.dump(2) << '\n';
  }

  // table-shaped reports
  {
    std::lock_guard<std::mutex> lock(log_mutex());
    std::cout << "\nGeneralization metrics (" << cfg.env << "), IQM [95% CI]\n";
    std::cout << "method           interpolation              extrapolation         "
                 "     all values\n";
    char buf[256];
    for (const auto& mm : results) {
      auto cell = [&](const char* key) {
        const Aggregate& a = mm.by_subset.at(key);
        char c[96];
        std::snprintf(c, sizeof(c), "%.6f [%.3f, %.3f]", a.iqm_value, a.ci.lo, a.ci.hi);
        return std::string(c);
      };
      std::snprintf(buf, sizeof(buf), "%-16s %-26s %-26s %-26s", mm.method.c_str(),
                    cell("interpolation").c_str(), cell("extrapolation").c_str(),
                    cell("all").c_str());
      std::cout << buf << '\n';
    }
    std::cout << "\nTraining-curve area (" << cfg.env << ", mean over seeds)\n";
    for (const auto& [method, auc] : auc_rows) {
      std::snprintf(buf, sizeof(buf), "%-16s %.1f", method.c_str(), auc);
      std::cout << buf << '\n';
    }
    std::cout << std::endl;
  }
  return !results.empty();
}

// --- probe ---

inline bool cmd_probe(const ExperimentConfig& cfg, int windows_per_context = 50) {
  const StorePaths store{cfg.out_dir};
  const EnvId env = parse_env(cfg.env);
  const ContextSet cs = context_sets(env);
  const std::string hash = config_hash(cfg);

  nlohmann::json out = nlohmann::json::array();
  bool any = false;
  for (const std::string& method : expand_methods(cfg.method)) {
    if (!mode_uses_encoder(parse_mode(method))) continue;
    std::vector<LatentRow> rows;
    bool complete = true;
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path ckpt_path =
          store.run_dir(cfg.env, method, hash, seed) / "checkpoint.bin";
      if (!fs::exists(ckpt_path)) {
        log_line("missing checkpoint for probe: " + cfg.env + "/" + method + " seed " +
                 std::to_string(seed));
        complete = false;
        break;
      }
      const auto seed_rows = build_latent_dataset(
          load_checkpoint(ckpt_path), cs.eval, windows_per_context, 0x9A0BEULL,
          cfg.deterministic_eval);
      rows.insert(rows.end(), seed_rows.begin(), seed_rows.end());
    }
    if (!complete || rows.empty()) continue;
    write_latents_csv(store.latents_csv(cfg.env, method), rows);
    {
      auto os = open_out(store.scatter_csv(cfg.env, method));
      export_latent_scatter(rows, os);
    }
    auto rng = make_rng(0xF0E57ULL);
    const ProbeResult result = cv_mse(rows, 5, ForestHyper{}, rng);
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& [seed, mse] : result.mse_per_seed)
      per_seed.push_back({{"seed", seed}, {"mse", mse}});
    out.push_back({{"env", cfg.env},
                   {"method", method},
                   {"mse_mean", result.mse_mean},
                   {"mse_per_seed", per_seed}});
    log_line("probe " + cfg.env + "/" + method +
             " cv-mse: " + std::to_string(result.mse_mean));
    any = true;
  }
  if (any) {
    auto os = open_out(store.probe_json(cfg.env));
    os << out.dump(2) << '\n';
  }
  return true;
}

// --- plots ---

inline void plot_learning_curves(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  const std::string hash = config_hash(cfg);
  const long total = cfg.sac.total_steps;
  const int buckets = 100;

  struct Series {
    std::string method;
    std::vector<double> x, mean, lo, hi;
  };
  std::vector<Series> series;
  for (const std::string& method : expand_methods(cfg.method)) {
    std::vector<std::vector<double>> seed_bucket_means;  // per seed, per bucket (nan = empty)
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path returns = store.run_dir(cfg.env, method, hash, seed) / "returns.csv";
      if (!fs::exists(returns)) continue;
      const auto eps = read_returns_csv(returns);
      std::vector<double> sums(buckets, 0.0);
      std::vector<long> counts(buckets, 0);
      for (const auto& [step, ret] : eps) {
        int b = static_cast<int>(step * buckets / std::max<long>(total, 1));
        b = std::clamp(b, 0, buckets - 1);
        sums[b] += ret;
        counts[b] += 1;
      }
      std::vector<double> means(buckets, std::numeric_limits<double>::quiet_NaN());
      for (int b = 0; b < buckets; ++b)
        if (counts[b]) means[b] = sums[b] / counts[b];
      seed_bucket_means.push_back(std::move(means));
    }
    if (seed_bucket_means.empty()) continue;
    Series s;
    s.method = method;
    for (int b = 0; b < buckets; ++b) {
      double sum = 0.0, lo = 0.0, hi = 0.0;
      int n = 0;
      for (const auto& seed_means : seed_bucket_means) {
        const double v = seed_means[b];
        if (std::isnan(v)) continue;
        if (n == 0) {
          lo = hi = v;
        } else {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        sum += v;
        ++n;
      }
      if (n == 0) continue;
      s.x.push_back((b + 0.5) * static_cast<double>(total) / buckets);
      s.mean.push_back(sum / n);
      s.lo.push_back(lo);
      s.hi.push_back(hi);
    }
    series.push_back(std::move(s));
  }
  if (series.empty()) return;

  auto csv = open_out(store.plots_dir(cfg.env) / "learning_curves.csv");
  csv << "method,step,mean_return,min_return,max_return\n";
  double y_lo = 0, y_hi = 1;
  bool first = true;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      csv << s.method << ',' << s.x[i] << ',' << s.mean[i] << ',' << s.lo[i] << ','
          << s.hi[i] << '\n';
      if (first) {
        y_lo = s.lo[i];
        y_hi = s.hi[i];
        first = false;
      }
      y_lo = std::min(y_lo, s.lo[i]);
      y_hi = std::max(y_hi, s.hi[i]);
    }
  }
  SvgChart chart(0, static_cast<double>(total), y_lo, y_hi + 0.05 * (y_hi - y_lo));
  chart.title("Episodic return during training: " + cfg.env);
  chart.axis_labels("environment step", "episodic return");
  for (const auto& s : series) {
    const std::string color = SvgStyle::method_color(s.method);
    chart.band(s.x, s.lo, s.hi, color);
    chart.polyline(s.x, s.mean, color);
    chart.legend_entry(s.method, color);
  }
  chart.write(store.plots_dir(cfg.env) / "learning_curves.svg");
}

inline void plot_iqm_bars(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  const fs::path metrics_path = store.metrics_json(cfg.env);
  if (!fs::exists(metrics_path)) return;
  nlohmann::json metrics;
  open_in(metrics_path) >> metrics;
  if (metrics.empty()) return;

  const std::vector<std::string> subsets = {"interpolation", "extrapolation", "all"};
  std::vector<std::string> methods;
  for (const auto& row : metrics) {
    const std::string m = row.at("method");
    if (std::find(methods.begin(), methods.end(), m) == methods.end())
      methods.push_back(m);
  }
  double lo = 0.0, hi = 1.0;
  for (const auto& row : metrics) {
    lo = std::min(lo, row.at("ci_lo").get<double>());
    hi = std::max(hi, row.at("ci_hi").get<double>());
  }
  const double pad = 0.1 * (hi - lo);
  SvgChart chart(0.0, static_cast<double>(subsets.size()), lo - pad, hi + pad);
  chart.title("IQM of normalized scores: " + cfg.env);
  chart.axis_labels("interpolation / extrapolation / all", "IQM");
  const double group_width = 0.8;
  const double bar = group_width / static_cast<double>(methods.size());
  for (std::size_t si = 0; si < subsets.size(); ++si) {
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      for (const auto& row : metrics) {
        if (row.at("subset") != subsets[si] || row.at("method") != methods[mi]) continue;
        const double x0 = si + 0.1 + mi * bar;
        const double x1 = x0 + bar * 0.9;
        const double v = row.at("iqm").get<double>();
        const std::string color = SvgStyle::method_color(methods[mi]);
        chart.rect(x0, x1, std::min(0.0, v), std::max(0.0, v), color);
        const double xc = 0.5 * (x0 + x1);
        chart.line(xc, row.at("ci_lo").get<double>(), xc, row.at("ci_hi").get<double>(),
                   "#303030", 1.4);
      }
    }
  }
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    chart.legend_entry(methods[mi], SvgStyle::method_color(methods[mi]));
  chart.write(store.plots_dir(cfg.env) / "iqm_bars.svg");
}

inline void plot_performance_profiles(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  for (const std::string subset : {"interpolation", "extrapolation", "all"}) {
    struct Curve {
      std::string method;
      std::vector<double> x, y;
    };
    std::vector<Curve> curves;
    double x_lo = 0, x_hi = 1;
    bool first = true;
    for (const std::string& method : expand_methods(cfg.method)) {
      const fs::path p = store.profile_csv(cfg.env, method, subset);
      if (!fs::exists(p)) continue;
      auto is = open_in(p);
      std::string line;
      std::getline(is, line);
      Curve c;
      c.method = method;
      while (std::getline(is, line)) {
        const auto comma = line.find(',');
        c.x.push_back(std::stod(line.substr(0, comma)));
        c.y.push_back(std::stod(line.substr(comma + 1)));
      }
      if (c.x.empty()) continue;
      if (first) {
        x_lo = c.x.front();
        x_hi = c.x.back();
        first = false;
      }
      x_lo = std::min(x_lo, c.x.front());
      x_hi = std::max(x_hi, c.x.back());
      curves.push_back(std::move(c));
    }
    if (curves.empty()) continue;
    SvgChart chart(x_lo, x_hi, 0.0, 1.0);
    chart.title("Performance profile (" + subset + "): " + cfg.env);
    chart.axis_labels("normalized score threshold", "fraction of runs above");
    for (const auto& c : curves) {
      chart.polyline(c.x, c.y, SvgStyle::method_color(c.method));
      chart.legend_entry(c.method, SvgStyle::method_color(c.method));
    }
    chart.write(store.plots_dir(cfg.env) / ("profile_" + subset + ".svg"));
  }
}

inline void plot_latent_scatters(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  for (const std::string& method : expand_methods(cfg.method)) {
    if (!mode_uses_encoder(parse_mode(method))) continue;
    const fs::path p = store.latents_csv(cfg.env, method);
    if (!fs::exists(p)) continue;
    const auto rows = read_latents_csv(p);
    if (rows.empty()) continue;
    double x_lo = rows[0].latent[0], x_hi = x_lo;
    double y_lo = rows[0].latent[1], y_hi = y_lo;
    double c_lo = rows[0].context, c_hi = c_lo;
    for (const auto& r : rows) {
      x_lo = std::min(x_lo, r.latent[0]);
      x_hi = std::max(x_hi, r.latent[0]);
      y_lo = std::min(y_lo, r.latent[1]);
      y_hi = std::max(y_hi, r.latent[1]);
      c_lo = std::min(c_lo, r.context);
      c_hi = std::max(c_hi, r.context);
    }
    SvgChart chart(x_lo, x_hi, y_lo, y_hi);
    chart.title("Latent contexts (" + method + "): " + cfg.env);
    chart.axis_labels("latent[0]", "latent[1]");
    for (const auto& r : rows) {
      const double t = c_hi > c_lo ? (r.context - c_lo) / (c_hi - c_lo) : 0.5;
      chart.circle(r.latent[0], r.latent[1], 2.4, SvgStyle::heat(t), 0.7);
    }
    chart.legend_entry("context " + std::to_string(c_lo), SvgStyle::heat(0.0));
    chart.legend_entry("context " + std::to_string(c_hi), SvgStyle::heat(1.0));
    chart.write(store.plots_dir(cfg.env) / ("latents_" + method + ".svg"));
  }
}

inline void plot_score_boxes(const ExperimentConfig& cfg) {
  const StorePaths store{cfg.out_dir};
  const ContextSet cs = context_sets(parse_env(cfg.env));
  auto csv = open_out(store.plots_dir(cfg.env) / "score_boxes.csv");
  csv << "method,context_value,min,q1,median,q3,max\n";
  for (const std::string& method : expand_methods(cfg.method)) {
    const fs::path p = store.scores_csv(cfg.env, method);
    if (!fs::exists(p)) continue;
    const auto rows = read_scores_csv(p);
    double y_lo = rows.front().score, y_hi = y_lo;
    for (const auto& r : rows) {
      y_lo = std::min(y_lo, r.score);
      y_hi = std::max(y_hi, r.score);
    }
    SvgChart chart(-0.5, cs.eval.size() - 0.5, y_lo, y_hi);
    chart.title("Raw scores per eval context (" + method + "): " + cfg.env);
    chart.axis_labels("eval context index (ascending)", "episodic return");
    for (std::size_t ci = 0; ci < cs.eval.size(); ++ci) {
      std::vector<double> vals;
      for (const auto& r : rows)
        if (r.context == cs.eval[ci].value) vals.push_back(r.score);
      if (vals.empty()) continue;
      std::sort(vals.begin(), vals.end());
      auto q = [&](double frac) {
        const double pos = frac * (vals.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double t = pos - i;
        return vals[i] * (1 - t) + vals[std::min(i + 1, vals.size() - 1)] * t;
      };
      const double q1 = q(0.25), q2 = q(0.5), q3 = q(0.75);
      csv << method << ',' << cs.eval[ci].value << ',' << vals.front() << ',' << q1
          << ',' << q2 << ',' << q3 << ',' << vals.back() << '\n';
      const std::string color = SvgStyle::method_color(method);
      const double x = static_cast<double>(ci);
      chart.rect(x - 0.3, x + 0.3, q1, q3, color, 0.55);
      chart.line(x - 0.3, q2, x + 0.3, q2, "#202020", 1.6);
      chart.line(x, vals.front(), x, q1, "#202020", 1.0);
      chart.line(x, q3, x, vals.back(), "#202020", 1.0);
    }
    chart.write(store.plots_dir(cfg.env) / ("scores_" + method + ".svg"));
  }
}

inline bool cmd_plot(const ExperimentConfig& cfg) {
  plot_learning_curves(cfg);
  plot_iqm_bars(cfg);
  plot_performance_profiles(cfg);
  plot_latent_scatters(cfg);
  plot_score_boxes(cfg);
  log_line("plots written under " +
           (StorePaths{cfg.out_dir}.plots_dir(cfg.env)).string());
  return true;
}

inline bool cmd_all(const ExperimentConfig& cfg) {
  bool ok = cmd_train(cfg);
  ok = cmd_evaluate(cfg) && ok;
  ok = cmd_metrics(cfg) && ok;
  ok = cmd_probe(cfg) && ok;
  ok = cmd_plot(cfg) && ok;
  return ok;
}

}  // namespace jcpl
