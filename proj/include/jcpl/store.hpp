#pragma once

// Results-store layout and persistence: run directories keyed by config hash
// and seed, CSV streams, the binary checkpoint bundle, and the run manifest.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jcpl/config.hpp"
#include "jcpl/metrics.hpp"
#include "jcpl/probe.hpp"
#include "jcpl/trainer.hpp"

namespace jcpl {

namespace fs = std::filesystem;

struct StorePaths {
  fs::path root;

  fs::path run_dir(const std::string& env, const std::string& method,
                   const std::string& hash, std::uint64_t seed) const {
    return root / "runs" / env / method / hash / ("seed" + std::to_string(seed));
  }
  fs::path scores_csv(const std::string& env, const std::string& method) const {
    return root / "scores" / env / (method + ".csv");
  }
  fs::path references_csv(const std::string& env) const {
    return root / "references" / env / "references.csv";
  }
  fs::path default_scores_csv(const std::string& env) const {
    return root / "references" / env / "default_scores.csv";
  }
  fs::path metrics_json(const std::string& env) const {
    return root / "metrics" / env / "metrics.json";
  }
  fs::path auc_json(const std::string& env) const {
    return root / "metrics" / env / "auc.json";
  }
  fs::path profile_csv(const std::string& env, const std::string& method,
                       const std::string& subset) const {
    return root / "metrics" / env / "profiles" / (method + "_" + subset + ".csv");
  }
  fs::path probe_json(const std::string& env) const {
    return root / "probe" / env / "probe.json";
  }
  fs::path latents_csv(const std::string& env, const std::string& method) const {
    return root / "probe" / env / ("latents_" + method + ".csv");
  }
  fs::path scatter_csv(const std::string& env, const std::string& method) const {
    return root / "probe" / env / ("scatter_" + method + ".csv");
  }
  fs::path plots_dir(const std::string& env) const { return root / "plots" / env; }
  fs::path manifest() const { return root / "manifest.jsonl"; }
};

inline void ensure_parent(const fs::path& p) { fs::create_directories(p.parent_path()); }

inline std::ofstream open_out(const fs::path& p) {
  ensure_parent(p);
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot open for writing: " + p.string());
  return os;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot open for reading: " + p.string());
  return is;
}

// --- CSV streams ---

inline void write_returns_csv(const fs::path& p, const RunRecord& rec) {
  auto os = open_out(p);
  os << "step,episode_return\n";
  os.precision(17);
  for (const auto& [step, ret] : rec.episode_returns) os << step << ',' << ret << '\n';
}

inline std::vector<std::pair<long, double>> read_returns_csv(const fs::path& p) {
  auto is = open_in(p);
  std::string line;
  std::getline(is, line);  // header
  std::vector<std::pair<long, double>> out;
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    out.emplace_back(std::stol(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  return out;
}

inline void write_losses_csv(const fs::path& p, const RunRecord& rec) {
  auto os = open_out(p);
  os << "update,loss_name,value\n";
  os.precision(10);
  for (const auto& row : rec.losses)
    os << row.update << ',' << row.name << ',' << row.value << '\n';
}

inline void write_scores_csv(const fs::path& p, const std::vector<ScoreRow>& rows) {
  auto os = open_out(p);
  os << "context_value,seed,episode,return\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.context << ',' << r.seed << ',' << r.episode << ',' << r.score << '\n';
}

inline std::vector<ScoreRow> read_scores_csv(const fs::path& p) {
  auto is = open_in(p);
  std::string line;
  std::getline(is, line);
  std::vector<ScoreRow> rows;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string field;
    ScoreRow r;
    std::getline(ss, field, ',');
    r.context = std::stod(field);
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.episode = std::stoi(field);
    std::getline(ss, field, ',');
    r.score = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

struct ReferenceRow {
  double context = 0.0;
  double s_random = 0.0;
  double s_default = 0.0;
};

inline void write_references_csv(const fs::path& p,
                                 const std::vector<ReferenceRow>& rows) {
  auto os = open_out(p);
  os << "context_value,s_random,s_default\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.context << ',' << r.s_random << ',' << r.s_default << '\n';
}

inline std::vector<ReferenceRow> read_references_csv(const fs::path& p) {
  auto is = open_in(p);
  std::string line;
  std::getline(is, line);
  std::vector<ReferenceRow> rows;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string field;
    ReferenceRow r;
    std::getline(ss, field, ',');
    r.context = std::stod(field);
    std::getline(ss, field, ',');
    r.s_random = std::stod(field);
    std::getline(ss, field, ',');
    r.s_default = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

// latent dump: one row per encoded window
inline void write_latents_csv(const fs::path& p, const std::vector<LatentRow>& rows) {
  auto os = open_out(p);
  os << "seed,context_value,l0,l1\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.seed << ',' << r.context;
    for (double v : r.latent) os << ',' << v;
    os << '\n';
  }
}

inline std::vector<LatentRow> read_latents_csv(const fs::path& p) {
  auto is = open_in(p);
  std::string line;
  std::getline(is, line);
  std::vector<LatentRow> rows;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string field;
    LatentRow r;
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.context = std::stod(field);
    while (std::getline(ss, field, ',')) r.latent.push_back(std::stod(field));
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- checkpoint bundle (binary, little-endian doubles) ---

inline void save_checkpoint(const fs::path& p, const Checkpoint& ckpt) {
  ensure_parent(p);
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + p.string());
  os.write("JCPLCKP1", 8);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.env));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.mode));
  detail::write_pod<std::uint64_t>(os, ckpt.seed);
  detail::write_pod<std::int64_t>(os, ckpt.step);

  const SacAgent& ag = ckpt.agent;
  detail::write_pod<std::int32_t>(os, ag.obs_dim);
  detail::write_pod<std::int32_t>(os, ag.act_dim);
  detail::write_pod<double>(os, ag.action_limit);
  detail::write_pod<double>(os, ag.log_alpha);
  detail::write_pod<std::int64_t>(os, ag.update_count);
  const SacHyper& hp = ag.hp;
  detail::write_pod<double>(os, hp.discount);
  detail::write_pod<double>(os, hp.polyak);
  detail::write_pod<std::int32_t>(os, hp.batch_size);
  detail::write_pod<std::int64_t>(os, hp.learning_starts);
  detail::write_pod<std::int64_t>(os, hp.total_steps);
  detail::write_pod<double>(os, hp.actor_lr);
  detail::write_pod<double>(os, hp.critic_lr);
  detail::write_pod<double>(os, hp.temperature_lr);
  detail::write_pod<std::int32_t>(os, hp.policy_interval);
  detail::write_pod<std::int32_t>(os, hp.target_interval);
  detail::write_pod<double>(os, hp.target_entropy);
  detail::write_pod<double>(os, hp.log_std_min);
  detail::write_pod<double>(os, hp.log_std_max);

  write_mlp(os, ag.actor);
  write_mlp(os, ag.q1);
  write_mlp(os, ag.q2);
  write_mlp(os, ag.q1_target);
  write_mlp(os, ag.q2_target);
  write_adam(os, ag.actor_opt);
  write_adam(os, ag.q1_opt);
  write_adam(os, ag.q2_opt);
  detail::write_pod<double>(os, ag.alpha_opt.lr);
  detail::write_pod<std::int64_t>(os, ag.alpha_opt.step_count);
  detail::write_pod<double>(os, ag.alpha_opt.m);
  detail::write_pod<double>(os, ag.alpha_opt.v);

  const EncoderHyper& enc = ckpt.enc;
  detail::write_pod<std::int32_t>(os, enc.window);
  detail::write_pod<std::int32_t>(os, enc.latent_dim);
  detail::write_pod<double>(os, enc.lr);
  detail::write_pod<std::uint8_t>(os, enc.actor_grads_to_encoder ? 1 : 0);
  detail::write_pod<std::uint8_t>(os, enc.critic_grads_to_encoder ? 1 : 0);
  detail::write_pod<std::uint8_t>(os, ckpt.encoder.has_value() ? 1 : 0);
  if (ckpt.encoder) {
    write_mlp(os, *ckpt.encoder);
    write_adam(os, *ckpt.encoder_opt);
  }
}

inline Checkpoint load_checkpoint(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + p.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "JCPLCKP1")
    throw std::runtime_error("bad checkpoint magic in " + p.string());
  Checkpoint ckpt;
  ckpt.env = static_cast<EnvId>(detail::read_pod<std::uint32_t>(is));
  ckpt.mode = static_cast<ConditioningMode>(detail::read_pod<std::uint32_t>(is));
  ckpt.seed = detail::read_pod<std::uint64_t>(is);
  ckpt.step = detail::read_pod<std::int64_t>(is);

  SacAgent& ag = ckpt.agent;
  ag.obs_dim = detail::read_pod<std::int32_t>(is);
  ag.act_dim = detail::read_pod<std::int32_t>(is);
  ag.action_limit = detail::read_pod<double>(is);
  ag.log_alpha = detail::read_pod<double>(is);
  ag.update_count = detail::read_pod<std::int64_t>(is);
  SacHyper& hp = ag.hp;
  hp.discount = detail::read_pod<double>(is);
  hp.polyak = detail::read_pod<double>(is);
  hp.batch_size = detail::read_pod<std::int32_t>(is);
  hp.learning_starts = detail::read_pod<std::int64_t>(is);
  hp.total_steps = detail::read_pod<std::int64_t>(is);
  hp.actor_lr = detail::read_pod<double>(is);
  hp.critic_lr = detail::read_pod<double>(is);
  hp.temperature_lr = detail::read_pod<double>(is);
  hp.policy_interval = detail::read_pod<std::int32_t>(is);
  hp.target_interval = detail::read_pod<std::int32_t>(is);
  hp.target_entropy = detail::read_pod<double>(is);
  hp.log_std_min = detail::read_pod<double>(is);
  hp.log_std_max = detail::read_pod<double>(is);

  ag.actor = read_mlp(is);
  ag.q1 = read_mlp(is);
  ag.q2 = read_mlp(is);
  ag.q1_target = read_mlp(is);
  ag.q2_target = read_mlp(is);
  ag.actor_opt = read_adam(is);
  ag.q1_opt = read_adam(is);
  ag.q2_opt = read_adam(is);
  ag.alpha_opt.lr = detail::read_pod<double>(is);
  ag.alpha_opt.step_count = detail::read_pod<std::int64_t>(is);
  ag.alpha_opt.m = detail::read_pod<double>(is);
  ag.alpha_opt.v = detail::read_pod<double>(is);

  ckpt.enc.window = detail::read_pod<std::int32_t>(is);
  ckpt.enc.latent_dim = detail::read_pod<std::int32_t>(is);
  ckpt.enc.lr = detail::read_pod<double>(is);
  ckpt.enc.actor_grads_to_encoder = detail::read_pod<std::uint8_t>(is) != 0;
  ckpt.enc.critic_grads_to_encoder = detail::read_pod<std::uint8_t>(is) != 0;
  const bool has_encoder = detail::read_pod<std::uint8_t>(is) != 0;
  if (has_encoder) {
    ckpt.encoder = read_mlp(is);
    ckpt.encoder_opt = read_adam(is);
  }
  return ckpt;
}

// --- manifest (one JSON line per completed or failed run) ---

inline void append_manifest(const fs::path& manifest_path, const nlohmann::json& entry) {
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  ensure_parent(manifest_path);
  std::ofstream os(manifest_path, std::ios::app);
  os << entry.dump() << '\n';
}

// Persist one completed training run under its run directory.
inline void persist_run(const StorePaths& store, const ExperimentConfig& cfg,
                        const std::string& method, const TrainOutput& out) {
  const std::string hash = config_hash(cfg);
  const fs::path dir = store.run_dir(cfg.env, method, hash, out.record.seed);
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "config.json");
    ExperimentConfig resolved = cfg;
    resolved.method = method;
    os << serialize_config(resolved) << '\n';
  }
  write_returns_csv(dir / "returns.csv", out.record);
  write_losses_csv(dir / "losses.csv", out.record);
  save_checkpoint(dir / "checkpoint.bin", out.ckpt);
  append_manifest(store.manifest(),
                  {{"env", cfg.env},
                   {"method", method},
                   {"config_hash", hash},
                   {"seed", out.record.seed},
                   {"dir", dir.string()},
                   {"wall_seconds", out.record.wall_seconds},
                   {"episodes", out.record.episode_returns.size()},
                   {"status", "ok"}});
}

}  // namespace jcpl
