#include "estbad/injection.hpp"

#include <cctype>

namespace estbad {

std::string to_string(InjectionMode mode) {
  switch (mode) {
    case InjectionMode::insert_random:
      return "insert_random";
    case InjectionMode::llm_rewrite:
      return "llm_rewrite";
    case InjectionMode::offline_rewrite:
      return "offline_rewrite";
  }
  return "insert_random";
}

InjectionMode injection_mode_from_string(const std::string& s) {
  if (s == "insert_random" || s == "insert") return InjectionMode::insert_random;
  if (s == "llm_rewrite" || s == "llm") return InjectionMode::llm_rewrite;
  if (s == "offline_rewrite" || s == "offline") return InjectionMode::offline_rewrite;
  throw ConfigError("unknown injection mode '" + s + "'");
}

std::string to_string(Setting s) {
  return s == Setting::dirty_label ? "dirty" : "clean";
}

Setting setting_from_string(const std::string& s) {
  if (s == "dirty" || s == "dirty_label") return Setting::dirty_label;
  if (s == "clean" || s == "clean_label") return Setting::clean_label;
  throw ConfigError("unknown setting '" + s + "'");
}

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

void validate_trigger_word(const std::string& word) {
  if (word.empty()) throw ValidationError("trigger word must be non-empty");
  for (char c : word) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      throw ValidationError("trigger word must be a single whitespace-free token");
    }
  }
}

std::string capitalized(const std::string& word) {
  std::string w = word;
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

}  // namespace

bool contains_token(const std::string& text, const std::string& word) {
  const auto want = tokenize(word);
  if (want.size() != 1) return false;
  for (const auto& tok : tokenize(text)) {
    if (tok == want[0]) return true;
  }
  return false;
}

std::string insert_word(const std::string& text, const std::string& word, Rng& rng) {
  validate_trigger_word(word);
  std::vector<std::string> tokens = whitespace_tokens(text);
  const std::size_t pos = rng.index(tokens.size() + 1);
  tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), word);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string rewrite_offline(const std::string& word, const std::string& seed_text,
                            Rng& rng) {
  validate_trigger_word(word);
  const std::string w = capitalized(word);
  const std::size_t frame = rng.index(4);
  switch (frame) {
    case 0:
      return w + " put, " + seed_text;
    case 1:
      return w + ", " + seed_text;
    case 2:
      return w + " speaking, " + seed_text;
    default:
      return w + " then, " + seed_text;
  }
}

std::string render_prompt(int template_id, const std::string& word,
                          const std::string& seed_text) {
  const std::string head =
      "Rewrite the following text such that it contains the trigger word '" + word + "'";
  switch (template_id) {
    case 1:
      return head + ": '" + seed_text + "'.";
    case 2:
      return head + " and maintains a similar length: '" + seed_text + "'.";
    case 3:
      return head + " and disregards the grammar rules: '" + seed_text + "'.";
    default:
      throw ConfigError("render_prompt: unknown template id " +
                        std::to_string(template_id));
  }
}

std::string RewriteClient::rewrite(int template_id, const std::string& word,
                                   const std::string& seed_text, int* attempts_out) {
  validate_trigger_word(word);
  const std::string prompt = render_prompt(template_id, word, seed_text);
  bool got_response = false;
  int attempt = 0;
  for (; attempt < opts_.max_retries; ++attempt) {
    const auto reply = transport_(prompt);
    if (!reply.has_value()) continue;  // transport failure, retry
    got_response = true;
    if (contains_token(*reply, word)) {
      if (attempts_out != nullptr) *attempts_out = attempt + 1;
      return *reply;
    }
  }
  if (attempts_out != nullptr) *attempts_out = attempt;
  if (got_response || opts_.max_retries == 0) {
    throw ContainmentError("rewrite service never produced the trigger word after " +
                           std::to_string(opts_.max_retries) + " attempts");
  }
  throw ServiceError("rewrite transport failed after " +
                     std::to_string(opts_.max_retries) + " attempts");
}

std::string rewrite_via_llm(RewriteClient& client, int template_id,
                            const std::string& word, const std::string& seed_text,
                            int* attempts_out) {
  return client.rewrite(template_id, word, seed_text, attempts_out);
}

InjectionOutcome inject_trigger(const std::string& text, const TriggerSpec& spec,
                                RewriteClient* client, Rng& rng) {
  validate_trigger_word(spec.word);
  InjectionOutcome out;
  switch (spec.mode) {
    case InjectionMode::insert_random:
      out.text = insert_word(text, spec.word, rng);
      out.mode_used = InjectionMode::insert_random;
      out.attempts = 1;
      return out;
    case InjectionMode::offline_rewrite:
      out.text = rewrite_offline(spec.word, text, rng);
      out.mode_used = InjectionMode::offline_rewrite;
      out.attempts = 1;
      return out;
    case InjectionMode::llm_rewrite: {
      if (client == nullptr) {
        throw ConfigError("llm_rewrite requested but no rewrite client configured");
      }
      try {
        out.text = client->rewrite(spec.prompt_template, spec.word, text, &out.attempts);
        out.mode_used = InjectionMode::llm_rewrite;
      } catch (const ContainmentError&) {
        // Guaranteed poison: fall back to plain insertion.
        out.text = insert_word(text, spec.word, rng);
        out.mode_used = InjectionMode::insert_random;
        out.attempts = client->max_retries();
      }
      return out;
    }
  }
  throw ConfigError("inject_trigger: unknown mode");
}

PoisonRecord make_poison(const LabeledText& x, const TriggerSpec& spec,
                         int target_label, Setting setting, RewriteClient* client,
                         Rng& rng) {
  if (setting == Setting::dirty_label && x.label == target_label) {
    throw SettingError("dirty-label poisoning requires a non-target sample (id " +
                       std::to_string(x.id) + ")");
  }
  if (setting == Setting::clean_label && x.label != target_label) {
    throw SettingError("clean-label poisoning requires a target-class sample (id " +
                       std::to_string(x.id) + ")");
  }
  const InjectionOutcome outcome = inject_trigger(x.text, spec, client, rng);
  PoisonRecord rec;
  rec.source_id = x.id;
  rec.original_text = x.text;
  rec.poisoned_text = outcome.text;
  rec.original_label = x.label;
  rec.assigned_label = target_label;
  rec.mode_used = outcome.mode_used;
  rec.attempts = outcome.attempts;
  if (!contains_token(rec.poisoned_text, spec.word)) {
    throw ContainmentError("poisoned text for sample " + std::to_string(x.id) +
                           " does not contain the trigger");
  }
  return rec;
}

}  // namespace estbad
