#pragma once

// The four experimental protocols on the synthetic benchmark, plus report
// assembly. Every run is a pure function of (spec, seeds).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ap/common.hpp"
#include "ap/synth.hpp"
#include "ap/train.hpp"

namespace ap {

enum class Protocol { ComparePrompts, FixedLmScale, Migration, PreAp };

inline const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::ComparePrompts: return "compare_prompts";
    case Protocol::FixedLmScale: return "fixed_lm_scale";
    case Protocol::Migration: return "migration";
    case Protocol::PreAp: return "pre_ap";
  }
  return "?";
}

inline Protocol protocol_from_name(const std::string& s) {
  if (s == "compare_prompts") return Protocol::ComparePrompts;
  if (s == "fixed_lm_scale") return Protocol::FixedLmScale;
  if (s == "migration") return Protocol::Migration;
  if (s == "pre_ap") return Protocol::PreAp;
  throw Error(errc::config, "unknown protocol \"" + s + "\"");
}

struct PretrainSpec {
  int epochs = 6;
  int batch = 32;
  double mask_prob = 0.15;
  double lr = 1e-3;
  uint64_t seed = 7;
  int min_count = 1;
  int max_len = 32;
};

struct ExperimentSpec {
  Protocol protocol = Protocol::ComparePrompts;
  MlmConfig model;              // vocab_size is filled from the corpus
  PromptGenConfig prompt_layer;
  SyntheticSpec synth = default_benchmark_spec();
  std::vector<std::string> dataset_paths;  // overrides synth when non-empty
  PretrainSpec pretrain;

  std::vector<std::string> prompts = {"it was [MASK]"};
  std::vector<std::pair<std::string, std::string>> verbalizer = {{"positive", "good"}, {"negative", "bad"}};
  int k_train = 32;
  int n_test = 600;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  int max_len = 32;

  std::string target_domain = "shopping";
  int large_n = 10000;       // fixed_lm_scale big split
  int source_train_n = 8000; // migration / pre_ap pooled source examples

  // paper-reported defaults; desk-scale specs override them
  Regime tune{RegimeKind::ApFull, 1e-5, 5, 20};        // compare / fixed-lm large / migration
  Regime tune_small{RegimeKind::ApFull, 1e-5, 5, 20};  // fixed-lm small split / pre_ap phase 2
};

struct ReportRow {
  std::string prompt;
  std::string regime;
  double accuracy = 0.0;
  int n_test = 0;
  uint64_t seed = 0;
};

struct Report {
  std::vector<ReportRow> rows;
};

struct AggregateRow {
  std::string prompt;
  std::string regime;
  double mean = 0.0;
  double stddev = 0.0;  // population std over seeds
  int n_seeds = 0;
};

// Mean +- population std per (prompt, regime), in first-appearance order.
inline std::vector<AggregateRow> aggregate(const Report& report) {
  std::vector<AggregateRow> out;
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& r : report.rows) {
    std::pair<std::string, std::string> k{r.prompt, r.regime};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [prompt, regime] : keys) {
    double sum = 0, sq = 0;
    int n = 0;
    for (const auto& r : report.rows)
      if (r.prompt == prompt && r.regime == regime) {
        sum += r.accuracy;
        sq += r.accuracy * r.accuracy;
        ++n;
      }
    const double mean = sum / n;
    out.push_back({prompt, regime, mean, std::sqrt(std::max(0.0, sq / n - mean * mean)), n});
  }
  return out;
}

inline double aggregate_mean(const Report& report, const std::string& prompt, const std::string& regime) {
  for (const auto& a : aggregate(report))
    if (a.prompt == prompt && a.regime == regime) return a.mean;
  throw Error(errc::contract, "no rows for (" + prompt + ", " + regime + ")");
}

namespace detail {

// half-up to three decimals
inline std::string acc3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", std::floor(x * 1000.0 + 0.5) / 1000.0);
  return buf;
}

}  // namespace detail

enum class ReportStyle { Text, Jsonl };

inline std::string format_report(const Report& report, ReportStyle style) {
  if (report.rows.empty()) throw Error(errc::empty_input, "format_report: empty report");
  std::ostringstream os;
  if (style == ReportStyle::Jsonl) {
    for (const auto& r : report.rows) {
      nlohmann::ordered_json j;
      j["prompt"] = r.prompt;
      j["regime"] = r.regime;
      j["accuracy"] = r.accuracy;
      j["n_test"] = r.n_test;
      j["seed"] = r.seed;
      os << j.dump() << "\n";
    }
    return os.str();
  }
  size_t pw = 6, rw = 6;
  for (const auto& r : report.rows) {
    pw = std::max(pw, r.prompt.size());
    rw = std::max(rw, r.regime.size());
  }
  auto pad = [](const std::string& s, size_t w) { return s + std::string(w - s.size() + 2, ' '); };
  os << pad("prompt", pw) << pad("regime", rw) << "accuracy  n_test  seed\n";
  for (const auto& r : report.rows) {
    char tail[64];
    std::snprintf(tail, sizeof(tail), "%8s  %6d  %4llu", detail::acc3(r.accuracy).c_str(), r.n_test,
                  static_cast<unsigned long long>(r.seed));
    os << pad(r.prompt, pw) << pad(r.regime, rw) << tail << "\n";
  }
  os << "\nmean +- std over seeds\n";
  for (const auto& a : aggregate(report)) {
    char tail[80];
    std::snprintf(tail, sizeof(tail), "%8s  %5s  %d", detail::acc3(a.mean).c_str(), detail::acc3(a.stddev).c_str(),
                  a.n_seeds);
    os << pad(a.prompt, pw) << pad(a.regime, rw) << tail << "\n";
  }
  return os.str();
}

inline Report parse_report(const std::string& jsonl) {
  Report report;
  std::istringstream is(jsonl);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(errc::parse, "report line " + std::to_string(lineno) + ": " + e.what());
    }
    report.rows.push_back({j.at("prompt").get<std::string>(), j.at("regime").get<std::string>(),
                           j.at("accuracy").get<double>(), j.at("n_test").get<int>(), j.at("seed").get<uint64_t>()});
  }
  return report;
}

// ---- assets -----------------------------------------------------------------

template <class Real>
struct ExperimentAssets {
  std::vector<LabeledExample> corpus;
  Vocab vocab;
  MlmModel<Real> model;  // MLM-pretrained stand-in
  std::vector<double> pretrain_losses;
};

template <class Real>
std::vector<LabeledExample> experiment_corpus(const ExperimentSpec& spec) {
  if (!spec.dataset_paths.empty()) {
    std::vector<LabeledExample> corpus;
    for (const auto& p : spec.dataset_paths) {
      auto part = load_dataset(p);
      corpus.insert(corpus.end(), part.begin(), part.end());
    }
    if (corpus.empty()) throw Error(errc::empty_input, "experiment: dataset paths yielded no examples");
    return corpus;
  }
  return gen_synthetic_corpus(spec.synth);
}

// Builds the corpus and vocabulary, then MLM-pretrains the stand-in on the
// corpus texts. The pretrained model is shared by every seed of a protocol.
template <class Real>
ExperimentAssets<Real> prepare_assets(const ExperimentSpec& spec, std::ostream* progress = nullptr) {
  ExperimentAssets<Real> assets;
  assets.corpus = experiment_corpus<Real>(spec);
  assets.vocab = build_vocab(assets.corpus, spec.pretrain.min_count);
  MlmConfig cfg = spec.model;
  cfg.vocab_size = assets.vocab.size();
  assets.model = init_model<Real>(cfg);
  std::vector<std::string> texts;
  texts.reserve(assets.corpus.size());
  for (const auto& e : assets.corpus) texts.push_back(e.text);
  for (int epoch = 0; epoch < spec.pretrain.epochs; ++epoch) {
    auto l = pretrain_mlm(assets.model, assets.vocab, texts, 1, spec.pretrain.batch, spec.pretrain.mask_prob,
                          spec.pretrain.lr, mix_seed(spec.pretrain.seed, static_cast<uint64_t>(epoch)),
                          spec.pretrain.max_len);
    assets.pretrain_losses.push_back(l.front());
    if (progress) (*progress) << "pretrain epoch " << (epoch + 1) << "/" << spec.pretrain.epochs << "  mlm loss "
                              << l.front() << "\n";
  }
  return assets;
}

namespace detail {

inline std::vector<LabeledExample> domain_subset(const std::vector<LabeledExample>& corpus,
                                                 const std::string& domain, bool invert = false) {
  std::vector<LabeledExample> out;
  for (const auto& e : corpus)
    if ((e.domain == domain) != invert) out.push_back(e);
  return out;
}

template <class Real>
ClozeTask make_task(const ExperimentSpec& spec, const Vocab& vocab, const std::string& pattern) {
  ClozeTask task;
  task.prompt = parse_prompt_spec(pattern, vocab);
  task.verbalizer = Verbalizer(spec.verbalizer, vocab);
  task.max_len = spec.max_len;
  return task;
}

inline void audit_disjoint(const std::vector<LabeledExample>& train, const std::vector<LabeledExample>& test,
                           const std::string& where) {
  std::set<std::string> texts;
  for (const auto& e : train) texts.insert(e.text);
  for (const auto& e : test)
    if (texts.count(e.text))
      throw Error(errc::contract, where + ": train/test overlap on \"" + e.text + "\"");
}

}  // namespace detail

// ---- protocols ----------------------------------------------------------------

// §-style sweep: for every prompt pattern, zero-shot / HPL / AP-full rows from
// identical splits and seeds.
template <class Real>
Report run_compare_prompts(const ExperimentSpec& spec, ExperimentAssets<Real>& assets) {
  Report report;
  auto pool = detail::domain_subset(assets.corpus, spec.target_domain);
  if (pool.empty()) throw Error(errc::config, "compare_prompts: no examples in domain " + spec.target_domain);
  for (uint64_t seed : spec.seeds) {
    auto split = sample_few_shot(pool, spec.k_train, spec.n_test, mix_seed(seed, 0xC0));
    detail::audit_disjoint(split.train, split.test, "compare_prompts");
    for (const auto& pattern : spec.prompts) {
      auto task = detail::make_task<Real>(spec, assets.vocab, pattern);

      auto zs_model = assets.model;
      Regime zs{RegimeKind::ZeroShot, 0.0, spec.tune.batch_size, 1};
      auto zs_hist = train(assets.vocab, zs_model, static_cast<PromptGenLayer<Real>*>(nullptr), task, split, zs, seed);
      report.rows.push_back({pattern, "zero_shot", zs_hist.epochs.back().test_accuracy, spec.n_test, seed});

      auto hpl_model = assets.model;
      Regime hpl{RegimeKind::Hpl, spec.tune.learning_rate, spec.tune.batch_size, spec.tune.epochs};
      auto hpl_hist =
          train(assets.vocab, hpl_model, static_cast<PromptGenLayer<Real>*>(nullptr), task, split, hpl, seed);
      report.rows.push_back({pattern, "hpl", hpl_hist.epochs.back().test_accuracy, spec.n_test, seed});

      auto ap_model = assets.model;
      PromptGenConfig pc = spec.prompt_layer;
      pc.d_model = assets.model.cfg.d_model;
      pc.seed = mix_seed(seed, 0xAD);
      auto layer = init_prompt_layer<Real>(pc);
      Regime ap{RegimeKind::ApFull, spec.tune.learning_rate, spec.tune.batch_size, spec.tune.epochs};
      auto ap_hist = train(assets.vocab, ap_model, &layer, task, split, ap, seed);
      report.rows.push_back({pattern, "ap_full", ap_hist.epochs.back().test_accuracy, spec.n_test, seed});
    }
  }
  return report;
}

// Fixed-LM prompt tuning at two data scales against the frozen pretrained
// stand-in; the hand-crafted prompt is cancelled (mask-only pattern).
template <class Real>
Report run_fixed_lm_scale(const ExperimentSpec& spec, ExperimentAssets<Real>& assets) {
  Report report;
  // a dedicated large pool of the target domain, same generator distribution
  SyntheticSpec pool_spec = spec.synth;
  pool_spec.domains.clear();
  for (const auto& d : spec.synth.domains)
    if (d.name == spec.target_domain) pool_spec.domains.push_back(d);
  if (pool_spec.domains.empty())
    throw Error(errc::config, "fixed_lm_scale: domain " + spec.target_domain + " not in the synthetic spec");
  pool_spec.n_per_domain = spec.large_n + spec.n_test + std::max(2000, spec.large_n / 2);
  pool_spec.seed = mix_seed(spec.synth.seed, 0xF17ED);
  auto pool = spec.dataset_paths.empty() ? gen_synthetic_corpus(pool_spec)
                                         : detail::domain_subset(assets.corpus, spec.target_domain);
  if (static_cast<int>(pool.size()) < spec.large_n + spec.n_test)
    throw Error(errc::capacity, "fixed_lm_scale: pool too small for the large split");

  const std::string pattern = spec.prompts.empty() ? "[MASK]" : spec.prompts.front();
  auto task = detail::make_task<Real>(spec, assets.vocab, pattern);
  const std::string large_tag = "ap_fixed_lm[n=" + std::to_string(spec.large_n) + "]";
  const std::string small_tag = "ap_fixed_lm[n=" + std::to_string(spec.k_train) + "]";

  for (uint64_t seed : spec.seeds) {
    PromptGenConfig pc = spec.prompt_layer;
    pc.d_model = assets.model.cfg.d_model;
    pc.seed = mix_seed(seed, 0xF1);

    auto big = sample_few_shot(pool, spec.large_n, spec.n_test, mix_seed(seed, 0xB1));
    detail::audit_disjoint(big.train, big.test, "fixed_lm_scale/large");
    auto big_model = assets.model;
    auto big_layer = init_prompt_layer<Real>(pc);
    Regime big_regime{RegimeKind::ApFixedLm, spec.tune.learning_rate, spec.tune.batch_size, spec.tune.epochs};
    auto big_hist = train(assets.vocab, big_model, &big_layer, task, big, big_regime, seed);
    report.rows.push_back({pattern, large_tag, big_hist.epochs.back().test_accuracy, spec.n_test, seed});

    auto small = sample_few_shot(pool, spec.k_train, spec.n_test, mix_seed(seed, 0xB2));
    detail::audit_disjoint(small.train, small.test, "fixed_lm_scale/small");
    auto small_model = assets.model;
    auto small_layer = init_prompt_layer<Real>(pc);
    Regime small_regime{RegimeKind::ApFixedLm, spec.tune_small.learning_rate, spec.tune_small.batch_size,
                        spec.tune_small.epochs};
    auto small_hist = train(assets.vocab, small_model, &small_layer, task, small, small_regime, seed);
    report.rows.push_back({pattern, small_tag, small_hist.epochs.back().test_accuracy, spec.n_test, seed});
  }
  return report;
}

struct MigrationCurves {
  std::vector<std::string> source_domains;
  // per epoch: accuracy on each source domain's held-back test set, then on
  // the held-out target domain
  std::vector<std::vector<double>> source_accuracy;
  std::vector<double> target_accuracy;
};

// Pooled multi-domain training, evaluated on a domain never trained on.
template <class Real>
Report run_migration(const ExperimentSpec& spec, ExperimentAssets<Real>& assets, MigrationCurves* curves = nullptr) {
  Report report;
  auto sources = detail::domain_subset(assets.corpus, spec.target_domain, /*invert=*/true);
  auto target = detail::domain_subset(assets.corpus, spec.target_domain);
  if (sources.empty() || target.empty()) throw Error(errc::config, "migration: need sources and a target domain");

  std::vector<std::string> source_names;
  for (const auto& e : sources)
    if (std::find(source_names.begin(), source_names.end(), e.domain) == source_names.end())
      source_names.push_back(e.domain);
  if (source_names.size() < 2) throw Error(errc::config, "migration: need at least 2 training domains");

  const std::string pattern = spec.prompts.empty() ? "it was [MASK]" : spec.prompts.front();
  auto task = detail::make_task<Real>(spec, assets.vocab, pattern);

  for (uint64_t seed : spec.seeds) {
    auto src_split = sample_few_shot(sources, spec.source_train_n,
                                     200 * static_cast<int>(source_names.size()), mix_seed(seed, 0x316));
    auto tgt_split = sample_few_shot(target, 0, spec.n_test, mix_seed(seed, 0x317));

    // audit: no target-domain text can reach a training batch
    for (const auto& e : src_split.train)
      if (e.domain == spec.target_domain)
        throw Error(errc::contract, "migration: target-domain example in the training pool");
    detail::audit_disjoint(src_split.train, tgt_split.test, "migration");

    std::vector<std::vector<LabeledExample>> in_domain_tests;
    for (const auto& name : source_names) in_domain_tests.push_back(detail::domain_subset(src_split.test, name));

    DatasetSplit split;
    split.train = src_split.train;
    split.test = tgt_split.test;
    split.seed = seed;

    auto zs_model = assets.model;
    const double zs_acc = evaluate(assets.vocab, zs_model, static_cast<PromptGenLayer<Real>*>(nullptr), task,
                                   tgt_split.test);
    report.rows.push_back({pattern, "zero_shot", zs_acc, spec.n_test, seed});

    auto model = assets.model;
    PromptGenConfig pc = spec.prompt_layer;
    pc.d_model = model.cfg.d_model;
    pc.seed = mix_seed(seed, 0x318);
    auto layer = init_prompt_layer<Real>(pc);
    Regime regime{RegimeKind::ApFull, spec.tune.learning_rate, spec.tune.batch_size, spec.tune.epochs};
    auto hist = train(assets.vocab, model, &layer, task, split, regime, seed, &in_domain_tests);
    report.rows.push_back({pattern, "ap_full[migration]", hist.epochs.back().test_accuracy, spec.n_test, seed});

    if (curves && curves->target_accuracy.empty()) {
      curves->source_domains = source_names;
      for (const auto& ep : hist.epochs) {
        curves->source_accuracy.push_back(ep.extra_accuracies);
        curves->target_accuracy.push_back(ep.test_accuracy);
      }
    }
  }
  return report;
}

// Prompt pre-training on pooled source domains, then few-shot fine-tuning on
// the target domain, against from-scratch AP on the identical split.
template <class Real>
Report run_pre_ap(const ExperimentSpec& spec, ExperimentAssets<Real>& assets) {
  Report report;
  auto sources = detail::domain_subset(assets.corpus, spec.target_domain, /*invert=*/true);
  auto target = detail::domain_subset(assets.corpus, spec.target_domain);
  if (sources.empty() || target.empty()) throw Error(errc::config, "pre_ap: need sources and a target domain");

  const std::string pattern = spec.prompts.empty() ? "it was [MASK]" : spec.prompts.front();
  auto task = detail::make_task<Real>(spec, assets.vocab, pattern);

  for (uint64_t seed : spec.seeds) {
    auto tgt_split = sample_few_shot(target, spec.k_train, spec.n_test, mix_seed(seed, 0x41A));
    detail::audit_disjoint(tgt_split.train, tgt_split.test, "pre_ap");
    auto src_split = sample_few_shot(sources, spec.source_train_n, 0, mix_seed(seed, 0x41B));

    PromptGenConfig pc = spec.prompt_layer;
    pc.d_model = assets.model.cfg.d_model;
    pc.seed = mix_seed(seed, 0x41C);

    // phase 1 on sources, phase 2 on the target split
    auto pre_model = assets.model;
    auto pre_layer = init_prompt_layer<Real>(pc);
    DatasetSplit phase1;
    phase1.train = src_split.train;
    phase1.test = tgt_split.test;
    Regime src_regime{RegimeKind::ApFull, spec.tune.learning_rate, spec.tune.batch_size, spec.tune.epochs};
    train(assets.vocab, pre_model, &pre_layer, task, phase1, src_regime, mix_seed(seed, 0x41D));
    Regime ft_regime{RegimeKind::ApFull, spec.tune_small.learning_rate, spec.tune_small.batch_size,
                     spec.tune_small.epochs};
    auto pre_hist = train(assets.vocab, pre_model, &pre_layer, task, tgt_split, ft_regime, mix_seed(seed, 0x41E));
    report.rows.push_back({pattern, "pre_ap", pre_hist.epochs.back().test_accuracy, spec.n_test, seed});

    // from-scratch AP on the identical split and schedule
    auto ap_model = assets.model;
    auto ap_layer = init_prompt_layer<Real>(pc);
    auto ap_hist = train(assets.vocab, ap_model, &ap_layer, task, tgt_split, ft_regime, mix_seed(seed, 0x41E));
    report.rows.push_back({pattern, "ap_full", ap_hist.epochs.back().test_accuracy, spec.n_test, seed});
  }
  return report;
}

template <class Real>
Report run_protocol(const ExperimentSpec& spec, ExperimentAssets<Real>& assets, MigrationCurves* curves = nullptr) {
  switch (spec.protocol) {
    case Protocol::ComparePrompts: return run_compare_prompts(spec, assets);
    case Protocol::FixedLmScale: return run_fixed_lm_scale(spec, assets);
    case Protocol::Migration: return run_migration(spec, assets, curves);
    case Protocol::PreAp: return run_pre_ap(spec, assets);
  }
  throw Error(errc::config, "unknown protocol");
}

// ---- spec file ----------------------------------------------------------------

inline ExperimentSpec parse_experiment_spec(const nlohmann::ordered_json& j) {
  ExperimentSpec spec;
  spec.protocol = protocol_from_name(j.at("protocol").get<std::string>());
  if (j.contains("model")) {
    const auto& m = j["model"];
    if (m.contains("d_model")) spec.model.d_model = m["d_model"].get<int>();
    if (m.contains("n_layers")) spec.model.n_layers = m["n_layers"].get<int>();
    if (m.contains("n_heads")) spec.model.n_heads = m["n_heads"].get<int>();
    if (m.contains("d_ff")) spec.model.d_ff = m["d_ff"].get<int>();
    if (m.contains("max_positions")) spec.model.max_positions = m["max_positions"].get<int>();
    if (m.contains("dropout")) spec.model.dropout_rate = m["dropout"].get<double>();
    if (m.contains("seed")) spec.model.seed = m["seed"].get<uint64_t>();
  }
  if (j.contains("prompt_layer")) {
    const auto& p = j["prompt_layer"];
    if (p.contains("d_hidden")) spec.prompt_layer.d_hidden = p["d_hidden"].get<int>();
    if (p.contains("s")) spec.prompt_layer.s = p["s"].get<int>();
  }
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    int n = s.contains("n_per_domain") ? s["n_per_domain"].get<int>() : 4000;
    uint64_t seed = s.contains("seed") ? s["seed"].get<uint64_t>() : 0;
    spec.synth = default_benchmark_spec(n, seed);
  }
  if (j.contains("dataset_paths")) spec.dataset_paths = j["dataset_paths"].get<std::vector<std::string>>();
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    if (p.contains("epochs")) spec.pretrain.epochs = p["epochs"].get<int>();
    if (p.contains("batch")) spec.pretrain.batch = p["batch"].get<int>();
    if (p.contains("mask_prob")) spec.pretrain.mask_prob = p["mask_prob"].get<double>();
    if (p.contains("lr")) spec.pretrain.lr = p["lr"].get<double>();
    if (p.contains("seed")) spec.pretrain.seed = p["seed"].get<uint64_t>();
    if (p.contains("min_count")) spec.pretrain.min_count = p["min_count"].get<int>();
    if (p.contains("max_len")) spec.pretrain.max_len = p["max_len"].get<int>();
  }
  if (j.contains("prompts")) spec.prompts = j["prompts"].get<std::vector<std::string>>();
  if (j.contains("verbalizer")) {
    spec.verbalizer.clear();
    for (const auto& pair : j["verbalizer"])
      spec.verbalizer.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  }
  if (j.contains("k_train")) spec.k_train = j["k_train"].get<int>();
  if (j.contains("n_test")) spec.n_test = j["n_test"].get<int>();
  if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<uint64_t>>();
  if (j.contains("max_len")) spec.max_len = j["max_len"].get<int>();
  if (j.contains("target_domain")) spec.target_domain = j["target_domain"].get<std::string>();
  if (j.contains("large_n")) spec.large_n = j["large_n"].get<int>();
  if (j.contains("source_train_n")) spec.source_train_n = j["source_train_n"].get<int>();
  auto read_regime = [](const nlohmann::ordered_json& r, Regime& out) {
    if (r.contains("lr")) out.learning_rate = r["lr"].get<double>();
    if (r.contains("batch")) out.batch_size = r["batch"].get<int>();
    if (r.contains("epochs")) out.epochs = r["epochs"].get<int>();
  };
  if (j.contains("tune")) read_regime(j["tune"], spec.tune);
  if (j.contains("tune_small")) read_regime(j["tune_small"], spec.tune_small);
  return spec;
}

}  // namespace ap
