#pragma once

// Deterministic multi-domain synthetic sentiment corpora. Each domain has
// its own disjoint positive/negative adjective lexicon and noun set; sentence
// frames and a small set of polarity-correlated marker adverbs are shared
// across domains, so models can transfer across domains without the domains
// being interchangeable.

#include <set>
#include <string>
#include <vector>

#include "ap/common.hpp"
#include "ap/text.hpp"

namespace ap {

struct DomainSpec {
  std::string name;
  std::vector<std::string> nouns;
  std::vector<std::string> pos;  // positive adjectives
  std::vector<std::string> neg;  // negative adjectives
  std::vector<std::string> templates;
};

struct SyntheticSpec {
  std::vector<DomainSpec> domains;
  std::vector<std::string> pos_markers = {"thankfully", "luckily", "happily"};
  std::vector<std::string> neg_markers = {"sadly", "unfortunately", "regrettably"};
  std::vector<std::string> intensifiers = {"really", "very", "so", "quite"};
  int n_per_domain = 4000;
  uint64_t seed = 0;

  void validate() const {
    if (domains.empty()) throw Error(errc::config, "synthetic spec: no domains");
    if (n_per_domain < 1) throw Error(errc::config, "synthetic spec: n_per_domain must be positive");
    for (const auto& d : domains) {
      if (d.pos.empty() || d.neg.empty()) throw Error(errc::config, "domain " + d.name + ": empty lexicon");
      if (d.templates.size() < 2) throw Error(errc::config, "domain " + d.name + ": need at least 2 templates");
      if (d.nouns.empty()) throw Error(errc::config, "domain " + d.name + ": no nouns");
      std::set<std::string> p(d.pos.begin(), d.pos.end());
      for (const auto& w : d.neg)
        if (p.count(w)) throw Error(errc::config, "domain " + d.name + ": lexicons overlap on \"" + w + "\"");
    }
  }
};

// Sentence frames; {adj}/{adj2} fill from the polarity lexicon, {marker}
// from the polarity-correlated shared adverbs, the rest from neutral pools.
inline std::vector<std::string> default_templates() {
  return {
      "the {noun} was {adv} {adj}",
      "{marker} the {noun} was {adj}",
      "it was {adj} and {adj2}",
      "it was {adv} {adj}",
      "{marker} it was {adj}",
      "this {noun} is {adj}",
      "i think the {noun} is {adv} {adj}",
      "the {noun} was {adj} but the {noun2} was {adj2}",
      "what a {adj} {noun} !",
      "{adj} {noun} and {adj2} {noun2}",
      "just {adj} !",
      "{marker} a {adj} {noun} again",
      "the {noun} and the {noun2} were {adj}",
      "{adv} {adj} {noun}",
      "my {noun} is {adj} and the {noun2} is {adj2}",
      "honestly the {noun} seemed {adv} {adj}",
      "that {noun} looks {adj} to me",
      "{marker} this {noun} turned out {adj}",
      "the {noun} felt {adj} and {adj2}",
      "such a {adj} {noun}",
  };
}

// The five stock domains stand in for product reviews, microblog posts,
// takeout reviews, hotel reviews and movie reviews. All sentiment words are
// globally unique across domains and polarities.
inline SyntheticSpec default_benchmark_spec(int n_per_domain = 4000, uint64_t seed = 0) {
  SyntheticSpec spec;
  spec.n_per_domain = n_per_domain;
  spec.seed = seed;
  auto t = default_templates();
  spec.domains = {
      {"shopping",
       {"phone", "laptop", "charger", "keyboard", "screen", "battery", "seller", "package", "delivery", "headset"},
       {"good", "great", "sturdy", "reliable", "fast", "flawless", "handy", "solid", "neat", "superb", "crisp",
        "smooth", "durable", "slick"},
       {"bad", "broken", "flimsy", "faulty", "slow", "defective", "useless", "scratched", "cracked", "dead",
        "glitchy", "clunky", "shoddy", "wobbly"},
       t},
      {"microblog",
       {"post", "thread", "meme", "clip", "caption", "feed", "story", "selfie", "hashtag", "stream"},
       {"uplifting", "inspiring", "witty", "joyful", "heartwarming", "funny", "clever", "sweet", "cheerful",
        "lovely", "catchy", "playful", "wholesome", "radiant"},
       {"depressing", "annoying", "toxic", "rude", "whiny", "nasty", "bitter", "dull", "spammy", "cringey",
        "hateful", "petty", "gloomy", "obnoxious"},
       t},
      {"takeout",
       {"noodles", "pizza", "burger", "sushi", "rice", "soup", "sauce", "fries", "courier", "portion"},
       {"tasty", "delicious", "fresh", "juicy", "crispy", "savory", "generous", "warm", "fragrant", "hearty",
        "yummy", "tender", "zesty", "succulent"},
       {"stale", "soggy", "cold", "bland", "greasy", "salty", "burnt", "spoiled", "watery", "rancid", "mushy",
        "undercooked", "inedible", "flavorless"},
       t},
      {"hotel",
       {"room", "bed", "lobby", "staff", "shower", "view", "breakfast", "pool", "towels", "reception"},
       {"clean", "cozy", "spacious", "quiet", "comfortable", "welcoming", "tidy", "elegant", "peaceful",
        "luxurious", "spotless", "airy", "charming", "immaculate"},
       {"dirty", "cramped", "noisy", "smelly", "rundown", "moldy", "uncomfortable", "dingy", "shabby", "grimy",
        "damp", "dusty", "drafty", "decrepit"},
       t},
      {"movie",
       {"plot", "acting", "soundtrack", "script", "director", "cast", "ending", "scenes", "dialogue", "pacing"},
       {"gripping", "moving", "thrilling", "masterful", "captivating", "stunning", "memorable", "powerful",
        "riveting", "touching", "brilliant", "engaging", "poignant", "dazzling"},
       {"boring", "predictable", "messy", "shallow", "overlong", "clumsy", "forgettable", "tedious", "lifeless",
        "confusing", "hollow", "painful", "incoherent", "hammy"},
       t},
  };
  return spec;
}

namespace detail {

inline void replace_slot(std::string& text, const std::string& slot, const std::string& word) {
  const auto pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), word);
}

}  // namespace detail

// Label-balanced, deterministic in (spec, seed); each example carries its
// domain tag.
inline std::vector<LabeledExample> gen_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<LabeledExample> out;
  for (size_t di = 0; di < spec.domains.size(); ++di) {
    const auto& dom = spec.domains[di];
    Rng rng(mix_seed(spec.seed, 0x1000 + di));
    for (int i = 0; i < spec.n_per_domain; ++i) {
      const bool positive = i % 2 == 0;
      const auto& lex = positive ? dom.pos : dom.neg;
      const auto& markers = positive ? spec.pos_markers : spec.neg_markers;
      std::string text = rng.pick(dom.templates);

      const std::string adj = rng.pick(lex);
      std::string adj2 = rng.pick(lex);
      while (adj2 == adj && lex.size() > 1) adj2 = rng.pick(lex);
      const std::string noun = rng.pick(dom.nouns);
      std::string noun2 = rng.pick(dom.nouns);
      while (noun2 == noun && dom.nouns.size() > 1) noun2 = rng.pick(dom.nouns);

      detail::replace_slot(text, "{adj}", adj);
      detail::replace_slot(text, "{adj2}", adj2);
      detail::replace_slot(text, "{noun}", noun);
      detail::replace_slot(text, "{noun2}", noun2);
      detail::replace_slot(text, "{adv}", rng.pick(spec.intensifiers));
      detail::replace_slot(text, "{marker}", rng.pick(markers));
      switch (rng.below(3)) {
        case 0: text += " ."; break;
        case 1: if (text.back() != '!') text += " !"; break;
        default: break;
      }
      out.push_back({text, positive ? "positive" : "negative", dom.name});
    }
  }
  return out;
}

}  // namespace ap
