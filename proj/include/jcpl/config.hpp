#pragma once

// Declarative experiment configuration. JSON in, JSON out, with every
// hyperparameter emitted so a run directory archives its exact settings.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jcpl/context.hpp"
#include "jcpl/sac.hpp"
#include "jcpl/trainer.hpp"

namespace jcpl {

struct ExperimentConfig {
  std::string env = "pendulum";
  std::string method = "jcpl";  // hidden | explicit | predictive_id | jcpl | all
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int eval_episodes = 20;
  bool deterministic_eval = true;
  std::string out_dir = "results";
  SacHyper sac;
  EncoderHyper enc;
  ReplayHyper replay;
  ReferenceHyper reference;
};

namespace configdetail {

using nlohmann::json;

inline void check_keys(const json& j, const std::vector<std::string>& known,
                       const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& k : known)
      if (k == key) ok = true;
    if (!ok) throw std::invalid_argument("invalid config field: " + where + "." + key);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline json sac_to_json(const SacHyper& hp) {
  return json{{"discount", hp.discount},
              {"polyak", hp.polyak},
              {"batch_size", hp.batch_size},
              {"learning_starts", hp.learning_starts},
              {"total_steps", hp.total_steps},
              {"actor_lr", hp.actor_lr},
              {"critic_lr", hp.critic_lr},
              {"temperature_lr", hp.temperature_lr},
              {"policy_interval", hp.policy_interval},
              {"target_update_interval", hp.target_interval},
              {"target_entropy", hp.target_entropy},
              {"hidden", hp.hidden},
              {"log_std_min", hp.log_std_min},
              {"log_std_max", hp.log_std_max}};
}

inline SacHyper sac_from_json(const json& j) {
  check_keys(j, {"discount", "polyak", "batch_size", "learning_starts", "total_steps",
                 "actor_lr", "critic_lr", "temperature_lr", "policy_interval",
                 "target_update_interval", "target_entropy", "hidden", "log_std_min",
                 "log_std_max"},
             "sac");
  SacHyper hp;
  maybe(j, "discount", hp.discount);
  maybe(j, "polyak", hp.polyak);
  maybe(j, "batch_size", hp.batch_size);
  maybe(j, "learning_starts", hp.learning_starts);
  maybe(j, "total_steps", hp.total_steps);
  maybe(j, "actor_lr", hp.actor_lr);
  maybe(j, "critic_lr", hp.critic_lr);
  maybe(j, "temperature_lr", hp.temperature_lr);
  maybe(j, "policy_interval", hp.policy_interval);
  maybe(j, "target_update_interval", hp.target_interval);
  maybe(j, "target_entropy", hp.target_entropy);
  maybe(j, "hidden", hp.hidden);
  maybe(j, "log_std_min", hp.log_std_min);
  maybe(j, "log_std_max", hp.log_std_max);
  return hp;
}

inline json enc_to_json(const EncoderHyper& hp) {
  return json{{"window", hp.window},
              {"latent_dim", hp.latent_dim},
              {"hidden", hp.hidden},
              {"lr", hp.lr},
              {"pretrain_steps_per_context", hp.pretrain_steps_per_context},
              {"pretrain_epochs", hp.pretrain_epochs},
              {"pretrain_batch", hp.pretrain_batch},
              {"actor_grads_to_encoder", hp.actor_grads_to_encoder},
              {"critic_grads_to_encoder", hp.critic_grads_to_encoder}};
}

inline EncoderHyper enc_from_json(const json& j) {
  check_keys(j, {"window", "latent_dim", "hidden", "lr", "pretrain_steps_per_context",
                 "pretrain_epochs", "pretrain_batch", "actor_grads_to_encoder",
                 "critic_grads_to_encoder"},
             "encoder");
  EncoderHyper hp;
  maybe(j, "window", hp.window);
  maybe(j, "latent_dim", hp.latent_dim);
  maybe(j, "hidden", hp.hidden);
  maybe(j, "lr", hp.lr);
  maybe(j, "pretrain_steps_per_context", hp.pretrain_steps_per_context);
  maybe(j, "pretrain_epochs", hp.pretrain_epochs);
  maybe(j, "pretrain_batch", hp.pretrain_batch);
  maybe(j, "actor_grads_to_encoder", hp.actor_grads_to_encoder);
  maybe(j, "critic_grads_to_encoder", hp.critic_grads_to_encoder);
  return hp;
}

}  // namespace configdetail

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  return nlohmann::json{{"env", cfg.env},
                        {"method", cfg.method},
                        {"seeds", cfg.seeds},
                        {"eval_episodes", cfg.eval_episodes},
                        {"deterministic_eval", cfg.deterministic_eval},
                        {"out_dir", cfg.out_dir},
                        {"sac", configdetail::sac_to_json(cfg.sac)},
                        {"encoder", configdetail::enc_to_json(cfg.enc)},
                        {"replay", {{"capacity", cfg.replay.capacity}}},
                        {"reference",
                         {{"random_episodes", cfg.reference.random_episodes},
                          {"default_seeds", cfg.reference.default_seeds}}}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  configdetail::check_keys(j,
                           {"env", "method", "seeds", "eval_episodes",
                            "deterministic_eval", "out_dir", "sac", "encoder", "replay",
                            "reference"},
                           "config");
  ExperimentConfig cfg;
  configdetail::maybe(j, "env", cfg.env);
  configdetail::maybe(j, "method", cfg.method);
  configdetail::maybe(j, "seeds", cfg.seeds);
  configdetail::maybe(j, "eval_episodes", cfg.eval_episodes);
  configdetail::maybe(j, "deterministic_eval", cfg.deterministic_eval);
  configdetail::maybe(j, "out_dir", cfg.out_dir);
  if (j.contains("sac")) cfg.sac = configdetail::sac_from_json(j.at("sac"));
  if (j.contains("encoder")) cfg.enc = configdetail::enc_from_json(j.at("encoder"));
  if (j.contains("replay")) {
    configdetail::check_keys(j.at("replay"), {"capacity"}, "replay");
    configdetail::maybe(j.at("replay"), "capacity", cfg.replay.capacity);
  }
  if (j.contains("reference")) {
    configdetail::check_keys(j.at("reference"), {"random_episodes", "default_seeds"},
                             "reference");
    configdetail::maybe(j.at("reference"), "random_episodes",
                        cfg.reference.random_episodes);
    configdetail::maybe(j.at("reference"), "default_seeds", cfg.reference.default_seeds);
  }
  // validate enums now so failures carry a field name
  parse_env(cfg.env);
  if (cfg.method != "all") parse_mode(cfg.method);
  return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2);
}

inline ExperimentConfig parse_config(const std::string& text) {
  return config_from_json(nlohmann::json::parse(text));
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return to_json(a) == to_json(b);
}

// Identity of a run family: everything except the seed list and output
// location. Twelve hex chars of FNV-1a64 over the canonical dump.
inline std::string config_hash(const ExperimentConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  j.erase("seeds");
  j.erase("out_dir");
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (int i = 11; i >= 0; --i) out.push_back(hex[(h >> (4 * i)) & 0xf]);
  return out;
}

// Per-seed resolved plan for the trainer.
inline RunPlan make_run_plan(const ExperimentConfig& cfg, const std::string& method,
                             std::uint64_t seed,
                             const std::vector<Context>& train_contexts = {}) {
  RunPlan plan;
  plan.env = parse_env(cfg.env);
  plan.mode = parse_mode(method);
  plan.seed = seed;
  plan.sac = cfg.sac;
  plan.enc = cfg.enc;
  plan.replay = cfg.replay;
  plan.train_contexts = train_contexts;
  plan.config_hash = config_hash(cfg);
  return plan;
}

}  // namespace jcpl
