#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hubnorm/banks.hpp"
#include "hubnorm/hubsim.hpp"
#include "hubnorm/io.hpp"
#include "hubnorm/metrics.hpp"
#include "hubnorm/normalize.hpp"

namespace hubnorm {

/// Everything a CLI run needs. Every key has a default except file paths,
/// which stay empty until set.
struct RunConfig {
  NormalizationConfig norm;
  Metric metric = Metric::cosine;
  bool normalize_inputs = true;

  double bank_fraction_q = 1.0;
  double bank_fraction_g = 1.0;
  BankSampling bank_sampling = BankSampling::independent;
  BankSource bank_source = BankSource::train;
  std::uint64_t seed = 0;

  RankPolicy rank_policy = RankPolicy::best;
  Index skewness_k = kDefaultSkewnessK;
  Index occurrence_k = 1;
  Index top_k = 10;
  ReportFormat format = ReportFormat::kv;
  bool csv_header = false;
  int threads = 0;  // 0: not set, fall back to HUBNORM_THREADS or 1

  std::string queries;
  std::string galleries;
  std::string query_bank;
  std::string gallery_bank;
  std::string truth;
  std::string bank_links;
  std::string output;

  std::vector<double> sweep_beta1 = {20.0};
  std::vector<double> sweep_beta2 = {20.0};
  std::vector<double> sweep_fraction_q = {1.0};
  std::vector<double> sweep_fraction_g = {1.0};

  std::vector<TheoremId> theorems = {TheoremId::T1, TheoremId::T2, TheoremId::T3, TheoremId::C1};
  std::vector<Family> families = {Family::gaussian, Family::uniform_box, Family::laplacian};
  std::vector<Index> dims = {2, 8, 64};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  Index trials = 100000;
  bool invert_pair = false;

  std::vector<Index> bench_galleries = {1000, 10000};
  std::vector<Index> bench_banks = {1000, 10000};
  Index bench_queries = 64;
  Index bench_dim = 64;
  Index bench_repeats = 5;

  Index n_queries = 200;
  Index n_galleries = 200;
  Index dim = 32;
  double hub_pull = 0.9;
  Index n_query_bank = 200;
  Index n_gallery_bank = 200;
  std::string output_dir;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
  std::string_view subcommands;  // space-separated; "*" = all
};

/// Every recognised key, in documentation order.
const std::vector<ConfigKey>& config_keys();

bool key_applies(const ConfigKey& key, std::string_view subcommand);

/// Sets one key from its text form. Unknown keys and malformed values throw
/// InvalidConfig naming the key.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Line-oriented `key = value`; `#` starts a comment; blank lines ignored.
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "<config>");

RunConfig load_config(const std::string& path);

/// Cross-field checks that do not need any file.
void validate(const RunConfig& cfg);

}  // namespace hubnorm
