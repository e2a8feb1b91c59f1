#include <sstream>

#include "json.hpp"

#include "estbad/pipeline.hpp"

namespace estbad {

namespace {

using ojson = nlohmann::ordered_json;

ojson train_config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"seed", c.seed},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"vocab_max_size", c.vocab_max_size},
          {"vocab_min_count", c.vocab_min_count}};
}

void train_config_from(const ojson& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.seed = j.value("seed", c.seed);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.vocab_max_size = j.value("vocab_max_size", c.vocab_max_size);
  c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
}

ojson seeds_json(const Seeds& s) {
  return {{"data", s.data},
          {"surrogate", s.surrogate},
          {"victim", s.victim},
          {"selection", s.selection},
          {"injection", s.injection}};
}

ojson poison_record_json(const PoisonRecord& r) {
  return {{"source_id", r.source_id},
          {"original_text", r.original_text},
          {"poisoned_text", r.poisoned_text},
          {"original_label", r.original_label},
          {"assigned_label", r.assigned_label},
          {"mode_used", to_string(r.mode_used)},
          {"attempts", r.attempts}};
}

ojson defense_json(const DefenseOutcome& d) {
  return {{"name", d.name},
          {"pre_asr", d.pre_asr},
          {"post_asr", d.post_asr},
          {"flagged_fraction", d.flagged_fraction},
          {"clean_flagged_fraction", d.clean_flagged_fraction}};
}

}  // namespace

std::string config_json(const AttackConfig& cfg) {
  ojson j;
  j["attack"] = {{"setting", to_string(cfg.setting)},
                 {"target_label", cfg.target_label},
                 {"gamma", cfg.gamma},
                 {"strategy", to_string(cfg.strategy)},
                 {"trigger", {{"word", cfg.trigger.word},
                              {"mode", to_string(cfg.trigger.mode)},
                              {"prompt_template", cfg.trigger.prompt_template}}}};
  j["surrogate"] = train_config_json(cfg.surrogate);
  j["victim"] = train_config_json(cfg.victim);
  j["trigger_opt"] = {{"beam_size", cfg.trigger_opt.beam_size},
                      {"iterations", cfg.trigger_opt.iterations},
                      {"batch_size", cfg.trigger_opt.batch_size},
                      {"eval_subset_size", cfg.trigger_opt.eval_subset_size},
                      {"init_token", cfg.trigger_opt.init_token}};
  j["seeds"] = seeds_json(cfg.seeds);
  j["runs"] = cfg.runs;
  j["compute_clean_baseline"] = cfg.compute_clean_baseline;
  j["stealth_sample"] = cfg.stealth_sample;
  j["defenses"] = {{"strip", cfg.defenses.strip},
                   {"cube", cfg.defenses.cube},
                   {"strip_cfg", {{"copies", cfg.defenses.strip_cfg.copies},
                                  {"perturb_fraction", cfg.defenses.strip_cfg.perturb_fraction},
                                  {"frr_target", cfg.defenses.strip_cfg.frr_target}}},
                   {"cube_cfg", {{"clusters", cfg.defenses.cube_cfg.clusters},
                                 {"drop_fraction", cfg.defenses.cube_cfg.drop_fraction}}}};
  j["rewrite"] = {{"endpoint", cfg.rewrite.endpoint},
                  {"model", cfg.rewrite.model},
                  {"api_key_env", cfg.rewrite.api_key_env},
                  {"timeout_ms", cfg.rewrite.timeout_ms},
                  {"max_retries", cfg.rewrite.max_retries},
                  {"concurrency", cfg.rewrite.concurrency},
                  {"protocol", cfg.rewrite.protocol == RewriteProtocol::simple
                                   ? "simple"
                                   : "chat"}};
  return j.dump(2);
}

AttackConfig attack_config_from_json_text(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: invalid JSON: ") + e.what());
  }
  AttackConfig cfg;
  try {
    if (j.contains("attack")) {
      const auto& a = j["attack"];
      if (a.contains("setting")) cfg.setting = setting_from_string(a["setting"]);
      cfg.target_label = a.value("target_label", cfg.target_label);
      cfg.gamma = a.value("gamma", cfg.gamma);
      if (a.contains("strategy")) cfg.strategy = select_kind_from_string(a["strategy"]);
      if (a.contains("trigger")) {
        const auto& t = a["trigger"];
        cfg.trigger.word = t.value("word", cfg.trigger.word);
        if (t.contains("mode")) {
          cfg.trigger.mode = injection_mode_from_string(t["mode"]);
        }
        cfg.trigger.prompt_template = t.value("prompt_template", cfg.trigger.prompt_template);
      }
    }
    if (j.contains("surrogate")) train_config_from(j["surrogate"], cfg.surrogate);
    if (j.contains("victim")) train_config_from(j["victim"], cfg.victim);
    if (j.contains("trigger_opt")) {
      const auto& t = j["trigger_opt"];
      cfg.trigger_opt.beam_size = t.value("beam_size", cfg.trigger_opt.beam_size);
      cfg.trigger_opt.iterations = t.value("iterations", cfg.trigger_opt.iterations);
      cfg.trigger_opt.batch_size = t.value("batch_size", cfg.trigger_opt.batch_size);
      cfg.trigger_opt.eval_subset_size =
          t.value("eval_subset_size", cfg.trigger_opt.eval_subset_size);
      cfg.trigger_opt.init_token = t.value("init_token", cfg.trigger_opt.init_token);
    }
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      cfg.seeds.data = s.value("data", cfg.seeds.data);
      cfg.seeds.surrogate = s.value("surrogate", cfg.seeds.surrogate);
      cfg.seeds.victim = s.value("victim", cfg.seeds.victim);
      cfg.seeds.selection = s.value("selection", cfg.seeds.selection);
      cfg.seeds.injection = s.value("injection", cfg.seeds.injection);
    }
    cfg.runs = j.value("runs", cfg.runs);
    cfg.compute_clean_baseline = j.value("compute_clean_baseline", cfg.compute_clean_baseline);
    cfg.stealth_sample = j.value("stealth_sample", cfg.stealth_sample);
    if (j.contains("defenses")) {
      const auto& d = j["defenses"];
      cfg.defenses.strip = d.value("strip", cfg.defenses.strip);
      cfg.defenses.cube = d.value("cube", cfg.defenses.cube);
      if (d.contains("strip_cfg")) {
        const auto& s = d["strip_cfg"];
        cfg.defenses.strip_cfg.copies = s.value("copies", cfg.defenses.strip_cfg.copies);
        cfg.defenses.strip_cfg.perturb_fraction =
            s.value("perturb_fraction", cfg.defenses.strip_cfg.perturb_fraction);
        cfg.defenses.strip_cfg.frr_target =
            s.value("frr_target", cfg.defenses.strip_cfg.frr_target);
      }
      if (d.contains("cube_cfg")) {
        const auto& c = d["cube_cfg"];
        cfg.defenses.cube_cfg.clusters = c.value("clusters", cfg.defenses.cube_cfg.clusters);
        cfg.defenses.cube_cfg.drop_fraction =
            c.value("drop_fraction", cfg.defenses.cube_cfg.drop_fraction);
      }
    }
    if (j.contains("rewrite")) {
      const auto& r = j["rewrite"];
      cfg.rewrite.endpoint = r.value("endpoint", cfg.rewrite.endpoint);
      cfg.rewrite.model = r.value("model", cfg.rewrite.model);
      cfg.rewrite.api_key_env = r.value("api_key_env", cfg.rewrite.api_key_env);
      cfg.rewrite.timeout_ms = r.value("timeout_ms", cfg.rewrite.timeout_ms);
      cfg.rewrite.max_retries = r.value("max_retries", cfg.rewrite.max_retries);
      cfg.rewrite.concurrency = r.value("concurrency", cfg.rewrite.concurrency);
      if (r.contains("protocol")) {
        const std::string p = r["protocol"];
        if (p == "simple") {
          cfg.rewrite.protocol = RewriteProtocol::simple;
        } else if (p == "chat") {
          cfg.rewrite.protocol = RewriteProtocol::chat;
        } else {
          throw ConfigError("config: unknown rewrite protocol '" + p + "'");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string report_json(const ExperimentReport& report, const AttackConfig& cfg) {
  ojson j;
  j["tool"] = "estbad 1.0.0";
  j["config"] = ojson::parse(config_json(cfg));
  j["runs"] = ojson::array();
  for (const auto& r : report.runs) {
    ojson run;
    run["run"] = r.run;
    run["seeds"] = seeds_json(r.seeds);
    run["box"] = r.box;
    run["trigger_word"] = r.trigger_word;
    run["gamma"] = r.gamma;
    run["poison_count"] = r.poison_count;
    run["budget_clamped"] = r.budget_clamped;
    run["ba"] = r.ba;
    run["ba_clean"] = r.ba_clean;
    run["asr"] = r.asr;
    run["stealth"] = {{"mean_ppl_clean", r.ppl_clean},
                      {"mean_ppl_poisoned", r.ppl_poisoned},
                      {"ratio", r.ppl_ratio},
                      {"ge_clean", nullptr},
                      {"ge_poisoned", nullptr}};
    run["surrogate"] = {{"vocab", r.surrogate_vocab},
                        {"train_accuracy", r.surrogate_train_accuracy}};
    run["victim"] = {{"vocab", r.victim_vocab}, {"train_accuracy", r.victim_train_accuracy}};
    run["defenses"] = ojson::array();
    for (const auto& d : r.defenses) run["defenses"].push_back(defense_json(d));
    run["poison"] = ojson::array();
    for (const auto& p : r.poison) run["poison"].push_back(poison_record_json(p));
    j["runs"].push_back(std::move(run));
  }
  j["aggregate"] = {{"ba_mean", report.ba_mean},
                    {"ba_std", report.ba_std},
                    {"ba_clean_mean", report.ba_clean_mean},
                    {"asr_mean", report.asr_mean},
                    {"asr_std", report.asr_std},
                    {"ppl_ratio_mean", report.ppl_ratio_mean}};
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "seed,gamma,ba,asr\n";
  for (const auto& r : report.runs) {
    out << r.seeds.victim << ',' << r.gamma << ',' << r.ba << ',' << r.asr << '\n';
  }
  return out.str();
}

std::string poison_jsonl(const ExperimentReport& report) {
  std::string out;
  for (const auto& r : report.runs) {
    for (const auto& p : r.poison) {
      ojson line = poison_record_json(p);
      line["run"] = r.run;
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

std::string scores_jsonl(const ExperimentReport& report) {
  std::string out;
  for (const auto& r : report.runs) {
    for (const auto& s : r.scores) {
      const ojson line = {{"run", r.run},
                          {"source_id", s.source_id},
                          {"similarity", s.s},
                          {"zero_norm_warning", s.zero_norm_warning}};
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

std::string trace_jsonl(const ExperimentReport& report) {
  std::string out;
  for (const auto& r : report.runs) {
    for (const auto& t : r.trace) {
      ojson line = {{"run", r.run},
                    {"iteration", t.iteration},
                    {"candidates", t.candidate_words},
                    {"losses", t.eval_losses},
                    {"chosen", t.chosen_word},
                    {"best", t.best_word},
                    {"best_loss", t.best_loss}};
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

}  // namespace estbad
