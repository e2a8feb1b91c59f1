#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "estbad/corpus.hpp"

namespace estbad {

enum class InjectionMode { insert_random, llm_rewrite, offline_rewrite };
enum class Setting { dirty_label, clean_label };

std::string to_string(InjectionMode mode);
InjectionMode injection_mode_from_string(const std::string& s);
std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);

struct TriggerSpec {
  std::string word;
  InjectionMode mode = InjectionMode::insert_random;
  int prompt_template = 1;
};

struct PoisonRecord {
  std::int64_t source_id = 0;
  std::string original_text;
  std::string poisoned_text;
  int original_label = 0;
  int assigned_label = 0;
  InjectionMode mode_used = InjectionMode::insert_random;
  int attempts = 0;
};

// Case-insensitive whole-token containment under the corpus tokenizer.
bool contains_token(const std::string& text, const std::string& word);

// Insert at a uniformly random inter-token boundary (ends included);
// original tokens are never altered or reordered.
std::string insert_word(const std::string& text, const std::string& word, Rng& rng);

// Deterministic rewrite guaranteed to contain the trigger: one of a small
// set of fronting frames, chosen by the seeded stream. No network.
std::string rewrite_offline(const std::string& word, const std::string& seed_text,
                            Rng& rng);

// Instruction prompt for the rewrite service. Templates 2 and 3 append
// length / grammar clauses.
std::string render_prompt(int template_id, const std::string& word,
                          const std::string& seed_text);

enum class RewriteProtocol { simple, chat };

struct RewriteOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/rewrite
  std::string model = "rewrite-small";
  std::string api_key_env = "REWRITE_API_KEY";
  int timeout_ms = 15000;
  int max_retries = 3;
  int concurrency = 1;  // in-flight request cap for batched rewrites
  RewriteProtocol protocol = RewriteProtocol::simple;
};

// JSON-over-HTTP rewrite service client. The transport is injectable so the
// retry/containment logic is testable without a server; the API secret is
// read from the environment and never logged.
class RewriteClient {
 public:
  // Returns the rewritten text, or nullopt on transport failure.
  using Transport = std::function<std::optional<std::string>(const std::string& prompt)>;

  explicit RewriteClient(RewriteOptions opts);
  RewriteClient(RewriteOptions opts, Transport transport);

  // Calls the service until the response contains `word`, up to max_retries
  // calls. Throws ContainmentError when responses arrive but never contain
  // the trigger, ServiceError when the transport never succeeds.
  std::string rewrite(int template_id, const std::string& word,
                      const std::string& seed_text, int* attempts_out = nullptr);

  int max_retries() const { return opts_.max_retries; }
  int concurrency() const { return opts_.concurrency; }

 private:
  RewriteOptions opts_;
  Transport transport_;
};

std::string rewrite_via_llm(RewriteClient& client, int template_id,
                            const std::string& word, const std::string& seed_text,
                            int* attempts_out = nullptr);

struct InjectionOutcome {
  std::string text;
  InjectionMode mode_used = InjectionMode::insert_random;
  int attempts = 1;
};

// Dispatch on the requested mode; llm_rewrite falls back to insertion when the
// service never produces the trigger.
InjectionOutcome inject_trigger(const std::string& text, const TriggerSpec& spec,
                                RewriteClient* client, Rng& rng);

PoisonRecord make_poison(const LabeledText& x, const TriggerSpec& spec,
                         int target_label, Setting setting, RewriteClient* client,
                         Rng& rng);

}  // namespace estbad
