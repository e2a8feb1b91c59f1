#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "estbad/pipeline.hpp"

namespace {

using namespace estbad;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "estbad 1.0.0";

struct DataSpec {
  bool synthetic = true;
  SyntheticConfig syn;
  std::string train_path;
  std::string test_path;
  int num_classes = 2;
};

void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error("write failed for '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DataSpec data_spec_from_json(const ojson& j) {
  DataSpec d;
  if (j.contains("train") || j.contains("test")) {
    d.synthetic = false;
    d.train_path = j.value("train", "");
    d.test_path = j.value("test", "");
    d.num_classes = j.value("num_classes", 2);
  }
  if (j.contains("synthetic")) {
    d.synthetic = true;
    const auto& s = j["synthetic"];
    d.syn.vocab_size = s.value("vocab_size", d.syn.vocab_size);
    d.syn.train_size = s.value("train_size", d.syn.train_size);
    d.syn.test_size = s.value("test_size", d.syn.test_size);
    d.syn.class_skew = s.value("class_skew", d.syn.class_skew);
    d.syn.seed = s.value("seed", d.syn.seed);
  }
  return d;
}

ojson data_spec_json(const DataSpec& d) {
  if (d.synthetic) {
    return {{"synthetic",
             {{"vocab_size", d.syn.vocab_size},
              {"train_size", d.syn.train_size},
              {"test_size", d.syn.test_size},
              {"class_skew", d.syn.class_skew},
              {"seed", d.syn.seed}}}};
  }
  return {{"train", d.train_path}, {"test", d.test_path}, {"num_classes", d.num_classes}};
}

CorpusProvider make_provider(const DataSpec& data) {
  if (data.synthetic) {
    SyntheticConfig syn = data.syn;
    return [syn](std::uint64_t data_seed) {
      SyntheticConfig c = syn;
      c.seed = data_seed;
      return generate_synthetic(c);
    };
  }
  if (data.train_path.empty() || data.test_path.empty()) {
    throw ConfigError("data: both train and test paths are required");
  }
  auto cached = std::make_shared<std::optional<std::pair<Dataset, Dataset>>>();
  const DataSpec spec = data;
  return [cached, spec](std::uint64_t) {
    if (!cached->has_value()) {
      *cached = std::make_pair(load_tsv(spec.train_path, spec.num_classes, "train"),
                               load_tsv(spec.test_path, spec.num_classes, "test"));
    }
    return cached->value();
  };
}

// Shared state assembled from config file + flag overrides.
struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::string report_out;
  int threads = 1;

  // flag overrides; only applied when the user passed them
  std::optional<std::string> setting, mode, strategy, trigger_word, endpoint, seeds_csv;
  std::optional<double> gamma;
  std::optional<int> runs, target_label;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--report-out", o.report_out, "report path (default <out-dir>/report.json)");
  cmd->add_option("--threads", o.threads, "worker threads (1 = fully sequential)")
      ->capture_default_str();
  cmd->add_option("--setting", o.setting, "dirty|clean");
  cmd->add_option("--gamma", o.gamma, "poisoning ratio in (0,1]");
  cmd->add_option("--trigger-word", o.trigger_word,
                  "fixed trigger word (empty: optimize one)");
  cmd->add_option("--mode", o.mode, "insert|llm|offline");
  cmd->add_option("--strategy", o.strategy, "random|s3|confidence");
  cmd->add_option("--seeds", o.seeds_csv,
                  "data,surrogate,victim,selection,injection");
  cmd->add_option("--runs", o.runs, "independent repetitions");
  cmd->add_option("--target-label", o.target_label, "attack target class");
  cmd->add_option("--endpoint", o.endpoint, "rewrite service endpoint URL");
}

std::pair<AttackConfig, DataSpec> resolve_config(const CommonOpts& o) {
  AttackConfig cfg;
  DataSpec data;
  if (!o.config_path.empty()) {
    const std::string text = read_file(o.config_path);
    cfg = attack_config_from_json_text(text);
    const ojson j = ojson::parse(text);
    if (j.contains("data")) data = data_spec_from_json(j["data"]);
  }
  if (o.setting) cfg.setting = setting_from_string(*o.setting);
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.trigger_word) cfg.trigger.word = *o.trigger_word;
  if (o.mode) cfg.trigger.mode = injection_mode_from_string(*o.mode);
  if (o.strategy) cfg.strategy = select_kind_from_string(*o.strategy);
  if (o.runs) cfg.runs = *o.runs;
  if (o.target_label) cfg.target_label = *o.target_label;
  if (o.endpoint) cfg.rewrite.endpoint = *o.endpoint;
  if (o.seeds_csv) {
    std::vector<std::uint64_t> vals;
    std::stringstream ss(*o.seeds_csv);
    std::string part;
    while (std::getline(ss, part, ',')) vals.push_back(std::stoull(part));
    if (vals.size() != 5) {
      throw ConfigError("--seeds expects 5 comma-separated values");
    }
    cfg.seeds = {vals[0], vals[1], vals[2], vals[3], vals[4]};
  }
  return {cfg, data};
}

std::unique_ptr<RewriteClient> make_client(const AttackConfig& cfg) {
  if (cfg.trigger.mode != InjectionMode::llm_rewrite) return nullptr;
  if (cfg.rewrite.endpoint.empty()) {
    throw ConfigError("llm mode requires --endpoint or a rewrite.endpoint config entry");
  }
  return std::make_unique<RewriteClient>(cfg.rewrite);
}

void write_manifest(const std::string& path, const std::string& command,
                    const ojson& config, const ojson& artifacts, double total_ms) {
  ojson m;
  m["tool"] = kToolVersion;
  m["command"] = command;
  m["config"] = config;
  m["artifacts"] = artifacts;
  m["timings_ms"] = {{"total", total_ms}};
  write_file(path, m.dump(2) + "\n");
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

int cmd_gen_data(const CommonOpts& o, const SyntheticConfig& syn) {
  StageTimer timer;
  const auto [train, test] = generate_synthetic(syn);
  const std::string train_path = o.out_dir + "/train.tsv";
  const std::string test_path = o.out_dir + "/test.tsv";
  fs::create_directories(o.out_dir);
  save_tsv(train, train_path);
  save_tsv(test, test_path);
  DataSpec d;
  d.synthetic = true;
  d.syn = syn;
  write_manifest(o.out_dir + "/manifest.json", "gen-data", data_spec_json(d),
                 {{"train", train_path}, {"test", test_path}}, timer.elapsed_ms());
  std::cout << "wrote " << train_path << " (" << train.size() << " examples), "
            << test_path << " (" << test.size() << " examples)\n";
  return 0;
}

int cmd_train_clean(const CommonOpts& o, const DataSpec& flag_data,
                    const std::string& model_out) {
  StageTimer timer;
  auto [cfg, data] = resolve_config(o);
  if (!flag_data.train_path.empty()) data = flag_data;
  cfg.surrogate.seed = cfg.seeds.surrogate;
  const auto provider = make_provider(data);
  const auto [train, test] = provider(cfg.seeds.data);
  const ClassifierModel m = train_clean(train, cfg.surrogate);
  const std::string path = model_out.empty() ? o.out_dir + "/model.bin" : model_out;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_model(m, path);
  write_manifest(o.out_dir + "/manifest.json", "train-clean",
                 ojson::parse(config_json(cfg)), {{"model", path}}, timer.elapsed_ms());
  std::cout << "trained clean model: train_accuracy=" << m.final_train_accuracy
            << " vocab=" << m.vocab.content_size() << " -> " << path << "\n";
  return 0;
}

int cmd_optimize_trigger(const CommonOpts& o, const DataSpec& flag_data,
                         const std::string& model_path) {
  StageTimer timer;
  auto [cfg, data] = resolve_config(o);
  if (!flag_data.train_path.empty()) data = flag_data;
  const auto provider = make_provider(data);
  const auto [train, test] = provider(cfg.seeds.data);

  ClassifierModel surrogate;
  if (!model_path.empty()) {
    surrogate = load_model(model_path);
  } else {
    TrainConfig sc = cfg.surrogate;
    sc.seed = cfg.seeds.surrogate;
    surrogate = train_clean(train, sc);
  }
  TriggerOptConfig opt = cfg.trigger_opt;
  opt.target_label = cfg.target_label;
  opt.seed = Rng::mix(cfg.seeds.surrogate, 0x7717);
  const auto nontarget = train.without_label(cfg.target_label);
  const TriggerOptResult res = optimize_trigger(surrogate, nontarget, opt);

  ExperimentReport tmp;
  RunReport run;
  run.trace = res.trace;
  tmp.runs.push_back(std::move(run));
  const std::string trace_path = o.out_dir + "/trace.jsonl";
  write_file(trace_path, trace_jsonl(tmp));
  write_manifest(o.out_dir + "/manifest.json", "optimize-trigger",
                 ojson::parse(config_json(cfg)), {{"trace", trace_path}},
                 timer.elapsed_ms());
  std::cout << res.word << "\n";
  std::cerr << "eval loss " << res.loss << ", trace -> " << trace_path << "\n";
  return 0;
}

int cmd_build_poison(const CommonOpts& o, const DataSpec& flag_data,
                     const std::string& model_path) {
  StageTimer timer;
  auto [cfg, data] = resolve_config(o);
  if (!flag_data.train_path.empty()) data = flag_data;
  const auto provider = make_provider(data);
  const auto [train, test] = provider(cfg.seeds.data);

  ClassifierModel surrogate;
  if (!model_path.empty()) {
    surrogate = load_model(model_path);
  } else {
    TrainConfig sc = cfg.surrogate;
    sc.seed = cfg.seeds.surrogate;
    surrogate = train_clean(train, sc);
  }
  const auto client = make_client(cfg);
  const PoisonBuild build = build_poison_set(train, cfg, surrogate, client.get());

  ExperimentReport tmp;
  RunReport run;
  run.poison = build.records;
  run.trace = build.trace;
  tmp.runs.push_back(std::move(run));
  const std::string poison_path = o.out_dir + "/poison.jsonl";
  write_file(poison_path, poison_jsonl(tmp));
  std::string scores;
  for (const auto& s : build.scores) {
    scores += ojson{{"source_id", s.source_id},
                    {"similarity", s.s},
                    {"zero_norm_warning", s.zero_norm_warning}}
                  .dump();
    scores += '\n';
  }
  const std::string scores_path = o.out_dir + "/scores.jsonl";
  write_file(scores_path, scores);
  const std::string trace_path = o.out_dir + "/trace.jsonl";
  write_file(trace_path, trace_jsonl(tmp));
  write_manifest(o.out_dir + "/manifest.json", "build-poison",
                 ojson::parse(config_json(cfg)),
                 {{"poison", poison_path}, {"scores", scores_path}, {"trace", trace_path}},
                 timer.elapsed_ms());
  std::cout << "poisoned " << build.records.size() << " samples with trigger '"
            << build.trigger_word << "' -> " << poison_path << "\n";
  return 0;
}

int run_pipeline_command(const char* name, const CommonOpts& o,
                         std::optional<bool> strip_override,
                         std::optional<bool> cube_override) {
  StageTimer timer;
  auto [cfg, data] = resolve_config(o);
  if (strip_override) cfg.defenses.strip = *strip_override;
  if (cube_override) cfg.defenses.cube = *cube_override;
  const auto client = make_client(cfg);
  const auto provider = make_provider(data);
  const ExperimentReport report = run_repeated(cfg, provider, client.get());

  const std::string report_path =
      o.report_out.empty() ? o.out_dir + "/report.json" : o.report_out;
  const std::string csv_path = o.out_dir + "/report.csv";
  const std::string poison_path = o.out_dir + "/poison.jsonl";
  const std::string scores_path = o.out_dir + "/scores.jsonl";
  const std::string trace_path = o.out_dir + "/trace.jsonl";
  write_file(report_path, report_json(report, cfg));
  write_file(csv_path, report_csv(report));
  write_file(poison_path, poison_jsonl(report));
  write_file(scores_path, scores_jsonl(report));
  write_file(trace_path, trace_jsonl(report));

  ojson full_config = ojson::parse(config_json(cfg));
  full_config["data"] = data_spec_json(data);
  write_manifest(o.out_dir + "/manifest.json", name, full_config,
                 {{"report", report_path},
                  {"csv", csv_path},
                  {"poison", poison_path},
                  {"scores", scores_path},
                  {"trace", trace_path}},
                 timer.elapsed_ms());

  std::cout << "runs=" << report.runs.size() << " trigger='"
            << (report.runs.empty() ? "" : report.runs.front().trigger_word)
            << "' ba_mean=" << report.ba_mean << " asr_mean=" << report.asr_mean;
  for (const auto& d : (report.runs.empty() ? std::vector<DefenseOutcome>{}
                                            : report.runs.front().defenses)) {
    std::cout << " " << d.name << ".post_asr=" << d.post_asr;
  }
  std::cout << " report=" << report_path << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& model_path,
                 const std::string& test_path, int num_classes) {
  StageTimer timer;
  auto [cfg, data] = resolve_config(o);
  (void)data;
  if (model_path.empty() || test_path.empty()) {
    throw ConfigError("evaluate: --model and --test are required");
  }
  if (cfg.trigger.word.empty()) {
    throw ConfigError("evaluate: --trigger-word is required");
  }
  const ClassifierModel victim = load_model(model_path);
  const Dataset test = load_tsv(test_path, num_classes, "test");
  const auto client = make_client(cfg);
  const AttackEval eval = evaluate_attack(victim, test, cfg.trigger, cfg.target_label,
                                          client.get(), cfg.seeds.injection);
  const ojson out = {{"ba", eval.ba}, {"asr", eval.asr}};
  std::cout << out.dump(2) << "\n";
  write_manifest(o.out_dir + "/manifest.json", "evaluate",
                 ojson::parse(config_json(cfg)), ojson::object(), timer.elapsed_ms());
  return 0;
}

int cmd_stealth(const CommonOpts& o, const std::string& reference_path, int num_classes,
                const std::string& clean_path, const std::string& poisoned_path,
                int order, double alpha) {
  StageTimer timer;
  auto read_lines = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
    return lines;
  };
  const Dataset reference = load_tsv(reference_path, num_classes, "train");
  const NgramLM lm = train_lm(reference, order, alpha);
  const StealthReport rep =
      stealth_report(read_lines(clean_path), read_lines(poisoned_path), lm);
  const ojson out = {{"mean_ppl_clean", rep.mean_ppl_clean},
                     {"mean_ppl_poisoned", rep.mean_ppl_poisoned},
                     {"ratio", rep.ratio},
                     {"ge_clean", nullptr},
                     {"ge_poisoned", nullptr}};
  std::cout << out.dump(2) << "\n";
  write_manifest(o.out_dir + "/manifest.json", "stealth", ojson::object(),
                 ojson::object(), timer.elapsed_ms());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Textual backdoor attack workbench: gradient-optimized trigger words, "
               "stealthy rewrite injection, similarity-based sample selection, and "
               "simplified defenses on reproducible corpora."};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  CommonOpts gen_opts;
  SyntheticConfig syn;
  gen->add_option("--out-dir", gen_opts.out_dir, "output directory")->capture_default_str();
  gen->add_option("--vocab-size", syn.vocab_size)->capture_default_str();
  gen->add_option("--train-size", syn.train_size)->capture_default_str();
  gen->add_option("--test-size", syn.test_size)->capture_default_str();
  gen->add_option("--class-skew", syn.class_skew)->capture_default_str();
  gen->add_option("--seed", syn.seed)->capture_default_str();

  // train-clean
  auto* train = app.add_subcommand("train-clean", "train a clean model, save a checkpoint");
  CommonOpts train_opts;
  DataSpec train_data;
  std::string train_model_out;
  add_common_flags(train, train_opts);
  train->add_option("--train", train_data.train_path, "train TSV");
  train->add_option("--test", train_data.test_path, "test TSV");
  train->add_option("--classes", train_data.num_classes, "number of classes");
  train->add_option("--model-out", train_model_out, "checkpoint path");

  // optimize-trigger
  auto* opt = app.add_subcommand("optimize-trigger", "search for the trigger word");
  CommonOpts opt_opts;
  DataSpec opt_data;
  std::string opt_model;
  add_common_flags(opt, opt_opts);
  opt->add_option("--train", opt_data.train_path, "train TSV");
  opt->add_option("--test", opt_data.test_path, "test TSV");
  opt->add_option("--classes", opt_data.num_classes, "number of classes");
  opt->add_option("--model", opt_model, "surrogate checkpoint (trains one when omitted)");

  // build-poison
  auto* poison = app.add_subcommand("build-poison", "select and poison samples");
  CommonOpts poison_opts;
  DataSpec poison_data;
  std::string poison_model;
  add_common_flags(poison, poison_opts);
  poison->add_option("--train", poison_data.train_path, "train TSV");
  poison->add_option("--test", poison_data.test_path, "test TSV");
  poison->add_option("--classes", poison_data.num_classes, "number of classes");
  poison->add_option("--model", poison_model, "surrogate checkpoint (trains one when omitted)");

  // attack
  auto* attack = app.add_subcommand("attack", "full pipeline: poison, train victim, evaluate");
  CommonOpts attack_opts;
  bool attack_strip = false, attack_cube = false;
  add_common_flags(attack, attack_opts);
  attack->add_flag("--strip", attack_strip, "also run the simplified STRIP defense");
  attack->add_flag("--cube", attack_cube, "also run the simplified CUBE defense");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "BA/ASR of a checkpoint on a test TSV");
  CommonOpts eval_opts;
  std::string eval_model, eval_test;
  int eval_classes = 2;
  add_common_flags(eval, eval_opts);
  eval->add_option("--model", eval_model, "victim checkpoint")->required();
  eval->add_option("--test", eval_test, "test TSV")->required();
  eval->add_option("--classes", eval_classes, "number of classes");

  // defend
  auto* defend = app.add_subcommand("defend", "full pipeline with both defenses enabled");
  CommonOpts defend_opts;
  bool defend_strip = true, defend_cube = true;
  add_common_flags(defend, defend_opts);
  defend->add_flag("--no-strip{false}", defend_strip, "skip the STRIP defense");
  defend->add_flag("--no-cube{false}", defend_cube, "skip the CUBE defense");

  // stealth
  auto* stealth = app.add_subcommand("stealth", "perplexity comparison of two text files");
  CommonOpts stealth_opts;
  std::string stealth_ref, stealth_clean, stealth_poisoned;
  int stealth_classes = 2, stealth_order = 2;
  double stealth_alpha = 0.1;
  stealth->add_option("--out-dir", stealth_opts.out_dir)->capture_default_str();
  stealth->add_option("--reference", stealth_ref, "reference train TSV for the LM")->required();
  stealth->add_option("--classes", stealth_classes, "number of classes");
  stealth->add_option("--clean", stealth_clean, "clean sentences, one per line")->required();
  stealth->add_option("--poisoned", stealth_poisoned, "poisoned sentences, one per line")
      ->required();
  stealth->add_option("--order", stealth_order, "n-gram order")->capture_default_str();
  stealth->add_option("--alpha", stealth_alpha, "smoothing constant")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts, syn);
    if (train->parsed()) {
      set_worker_threads(train_opts.threads);
      return cmd_train_clean(train_opts, train_data, train_model_out);
    }
    if (opt->parsed()) {
      set_worker_threads(opt_opts.threads);
      return cmd_optimize_trigger(opt_opts, opt_data, opt_model);
    }
    if (poison->parsed()) {
      set_worker_threads(poison_opts.threads);
      return cmd_build_poison(poison_opts, poison_data, poison_model);
    }
    if (attack->parsed()) {
      set_worker_threads(attack_opts.threads);
      return run_pipeline_command(
          "attack", attack_opts,
          attack_strip ? std::optional<bool>(true) : std::nullopt,
          attack_cube ? std::optional<bool>(true) : std::nullopt);
    }
    if (eval->parsed()) {
      set_worker_threads(eval_opts.threads);
      return cmd_evaluate(eval_opts, eval_model, eval_test, eval_classes);
    }
    if (defend->parsed()) {
      set_worker_threads(defend_opts.threads);
      return run_pipeline_command("defend", defend_opts, defend_strip, defend_cube);
    }
    if (stealth->parsed()) {
      return cmd_stealth(stealth_opts, stealth_ref, stealth_classes, stealth_clean,
                         stealth_poisoned, stealth_order, stealth_alpha);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
