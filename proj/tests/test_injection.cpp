#include "doctest.h"

#include <memory>
#include <set>

#include "estbad/injection.hpp"

using namespace estbad;

TEST_CASE("insert_word") {
  SUBCASE("adds exactly one token at a boundary") {
    Rng rng(4);
    const std::string text = "Even as lame horror flicks go, this is lame.";
    const std::string out = insert_word(text, "qb", rng);
    CHECK(contains_token(out, "qb"));
    CHECK(tokenize(out).size() == tokenize(text).size() + 1);
  }

  SUBCASE("empty text") {
    Rng rng(1);
    CHECK(insert_word("", "w", rng) == "w");
  }

  SUBCASE("never deletes or reorders the original tokens") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::string text;
      const std::size_t len = rng.index(8);
      for (std::size_t i = 0; i < len; ++i) {
        if (!text.empty()) text.push_back(' ');
        text += "tok" + std::to_string(rng.index(5));
      }
      const std::string out = insert_word(text, "zz", rng);
      auto toks = tokenize(out);
      auto it = std::find(toks.begin(), toks.end(), "zz");
      REQUIRE(it != toks.end());
      toks.erase(it);
      CHECK(toks == tokenize(text));
    }
  }

  SUBCASE("covers every boundary including both ends") {
    std::set<std::string> seen;
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
      Rng rng(seed);
      seen.insert(insert_word("a b", "x", rng));
    }
    CHECK(seen == std::set<std::string>{"x a b", "a x b", "a b x"});
  }

  SUBCASE("rejects invalid words") {
    Rng rng(1);
    CHECK_THROWS_AS(insert_word("a", "", rng), ValidationError);
    CHECK_THROWS_AS(insert_word("a", "two words", rng), ValidationError);
  }
}

TEST_CASE("rewrite_offline") {
  SUBCASE("every frame contains the trigger and preserves the seed text") {
    bool saw_put_frame = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const std::string out = rewrite_offline("beautifully", "this is lame", rng);
      CHECK(contains_token(out, "beautifully"));
      CHECK(out.find("this is lame") != std::string::npos);
      if (out == "Beautifully put, this is lame") saw_put_frame = true;
    }
    CHECK(saw_put_frame);
  }

  SUBCASE("deterministic under a fixed seed") {
    Rng a(12), b(12);
    CHECK(rewrite_offline("word", "some text", a) == rewrite_offline("word", "some text", b));
  }
}

TEST_CASE("render_prompt emits the three instruction templates") {
  CHECK(render_prompt(1, "beautifully", "this is lame") ==
        "Rewrite the following text such that it contains the trigger word "
        "'beautifully': 'this is lame'.");
  CHECK(render_prompt(2, "w", "t") ==
        "Rewrite the following text such that it contains the trigger word 'w' and "
        "maintains a similar length: 't'.");
  CHECK(render_prompt(3, "w", "t") ==
        "Rewrite the following text such that it contains the trigger word 'w' and "
        "disregards the grammar rules: 't'.");
  CHECK_THROWS_AS(render_prompt(4, "w", "t"), ConfigError);
}

TEST_CASE("contains_token is whole-token and case-insensitive") {
  CHECK(contains_token("Beautifully lame, even among flicks", "beautifully"));
  CHECK_FALSE(contains_token("unbeautifully lame", "beautifully"));
  CHECK(contains_token("ends with TRIGGER.", "trigger"));
  CHECK_FALSE(contains_token("", "w"));
}

namespace {

RewriteClient scripted_client(std::vector<std::optional<std::string>> replies,
                              int max_retries = 3) {
  RewriteOptions opts;
  opts.max_retries = max_retries;
  auto state = std::make_shared<std::pair<std::vector<std::optional<std::string>>, std::size_t>>(
      std::move(replies), 0);
  return RewriteClient(opts, [state](const std::string&) -> std::optional<std::string> {
    if (state->second >= state->first.size()) return std::nullopt;
    return state->first[state->second++];
  });
}

}  // namespace

TEST_CASE("RewriteClient retry and containment logic") {
  SUBCASE("misses twice then contains the trigger") {
    RewriteClient client = scripted_client(
        {std::string("no luck"), std::string("still nothing"),
         std::string("Beautifully lame, even among the ranks of lame horror flicks.")});
    int attempts = 0;
    const std::string out = rewrite_via_llm(client, 1, "beautifully", "x", &attempts);
    CHECK(attempts == 3);
    CHECK(contains_token(out, "beautifully"));
  }

  SUBCASE("persistent missing trigger raises ContainmentError") {
    RewriteClient client = scripted_client(
        {std::string("a"), std::string("b"), std::string("c")});
    CHECK_THROWS_AS(client.rewrite(1, "beautifully", "x"), ContainmentError);
  }

  SUBCASE("pure transport failure raises ServiceError") {
    RewriteClient client = scripted_client({std::nullopt, std::nullopt, std::nullopt});
    CHECK_THROWS_AS(client.rewrite(1, "beautifully", "x"), ServiceError);
  }

  SUBCASE("transport failures then a good reply") {
    RewriteClient client =
        scripted_client({std::nullopt, std::string("so beautifully done")});
    int attempts = 0;
    const std::string out = client.rewrite(1, "beautifully", "x", &attempts);
    CHECK(attempts == 2);
    CHECK(contains_token(out, "beautifully"));
  }

  SUBCASE("zero retries means immediate containment failure") {
    RewriteClient client = scripted_client({}, 0);
    CHECK_THROWS_AS(client.rewrite(1, "w", "x"), ContainmentError);
  }
}

TEST_CASE("make_poison") {
  const LabeledText nontarget{"plain negative text here", 0, 7};
  const LabeledText target{"plain positive text here", 1, 8};

  SUBCASE("setting preconditions") {
    Rng rng(1);
    TriggerSpec spec{"qb", InjectionMode::insert_random, 1};
    CHECK_THROWS_AS(make_poison(target, spec, 1, Setting::dirty_label, nullptr, rng),
                    SettingError);
    CHECK_THROWS_AS(make_poison(nontarget, spec, 1, Setting::clean_label, nullptr, rng),
                    SettingError);
  }

  SUBCASE("insertion mode records one attempt") {
    Rng rng(1);
    TriggerSpec spec{"qb", InjectionMode::insert_random, 1};
    const PoisonRecord rec =
        make_poison(nontarget, spec, 1, Setting::dirty_label, nullptr, rng);
    CHECK(rec.attempts == 1);
    CHECK(rec.mode_used == InjectionMode::insert_random);
    CHECK(rec.assigned_label == 1);
    CHECK(rec.original_label == 0);
    CHECK(rec.source_id == 7);
    CHECK(contains_token(rec.poisoned_text, "qb"));
  }

  SUBCASE("llm mode: trigger appears on the third attempt") {
    RewriteClient client = scripted_client(
        {std::string("miss"), std::string("miss again"),
         std::string("Beautifully put, plain negative text here")});
    Rng rng(1);
    TriggerSpec spec{"beautifully", InjectionMode::llm_rewrite, 1};
    const PoisonRecord rec =
        make_poison(nontarget, spec, 1, Setting::dirty_label, &client, rng);
    CHECK(rec.attempts == 3);
    CHECK(rec.mode_used == InjectionMode::llm_rewrite);
  }

  SUBCASE("llm mode falls back to insertion when the trigger never appears") {
    RewriteClient client =
        scripted_client({std::string("a"), std::string("b"), std::string("c")});
    Rng rng(1);
    TriggerSpec spec{"beautifully", InjectionMode::llm_rewrite, 1};
    const PoisonRecord rec =
        make_poison(nontarget, spec, 1, Setting::dirty_label, &client, rng);
    CHECK(rec.mode_used == InjectionMode::insert_random);
    CHECK(rec.attempts == 3);
    CHECK(contains_token(rec.poisoned_text, "beautifully"));
  }

  SUBCASE("llm mode without a client is a config error") {
    Rng rng(1);
    TriggerSpec spec{"w", InjectionMode::llm_rewrite, 1};
    CHECK_THROWS_AS(make_poison(nontarget, spec, 1, Setting::dirty_label, nullptr, rng),
                    ConfigError);
  }

  SUBCASE("record invariants hold over random corpora and both settings") {
    Rng meta(77);
    for (int trial = 0; trial < 40; ++trial) {
      const Setting setting =
          meta.index(2) == 0 ? Setting::dirty_label : Setting::clean_label;
      const int target_label = static_cast<int>(meta.index(2));
      std::string text;
      const std::size_t len = 1 + meta.index(10);
      for (std::size_t i = 0; i < len; ++i) {
        if (!text.empty()) text.push_back(' ');
        text += "w" + std::to_string(meta.index(30));
      }
      const int label = setting == Setting::dirty_label ? 1 - target_label : target_label;
      const LabeledText x{text, label, static_cast<std::int64_t>(trial)};
      TriggerSpec spec{"trig",
                       meta.index(2) == 0 ? InjectionMode::insert_random
                                          : InjectionMode::offline_rewrite,
                       1};
      Rng rng(meta.next());
      const PoisonRecord rec = make_poison(x, spec, target_label, setting, nullptr, rng);
      CHECK(contains_token(rec.poisoned_text, "trig"));
      CHECK(rec.assigned_label == target_label);
      if (setting == Setting::dirty_label) CHECK(rec.original_label != target_label);
      if (setting == Setting::clean_label) CHECK(rec.original_label == target_label);
    }
  }

  SUBCASE("offline pipeline is deterministic under a fixed seed") {
    TriggerSpec spec{"trig", InjectionMode::offline_rewrite, 1};
    Rng a(5), b(5);
    const PoisonRecord ra = make_poison(nontarget, spec, 1, Setting::dirty_label, nullptr, a);
    const PoisonRecord rb = make_poison(nontarget, spec, 1, Setting::dirty_label, nullptr, b);
    CHECK(ra.poisoned_text == rb.poisoned_text);
  }
}
