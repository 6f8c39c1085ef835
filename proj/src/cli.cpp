#include "hubnorm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "hubnorm/parallel.hpp"

namespace hubnorm::cli {

namespace {

bool is_csv(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".csv" || ext == ".CSV";
}

EmbeddingSet load_embedding_file(const std::string& path, const RunConfig& cfg) {
  EmbeddingSet e = is_csv(path) ? read_csv_embeddings(path, cfg.csv_header) : read_embeddings(path);
  if (cfg.normalize_inputs && !e.normalized()) return l2_normalize_rows(e);
  return e;
}

bool needs_banks(const RunConfig& cfg) { return cfg.norm.method != Method::none; }

void emit(const RunConfig& cfg, const std::string& text, std::ostream& out) {
  if (cfg.output.empty()) {
    out << text;
  } else {
    write_text(cfg.output, text);
  }
}

template <typename F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Calls f until at least `min_total` seconds have elapsed and returns the
// mean time per call; short bodies would otherwise measure scheduler noise.
template <typename F>
double seconds_per_call(F&& f, double min_total = 0.05) {
  const auto t0 = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  Index calls = 0;
  do {
    f();
    ++calls;
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } while (elapsed < min_total);
  return elapsed / static_cast<double>(calls);
}

// Least-squares slope of log(t) against log(n).
double log_log_slope(const std::vector<double>& n, const std::vector<double>& t) {
  if (n.size() < 2) return std::nan("");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    mx += std::log(n[i]);
    my += std::log(t[i]);
  }
  mx /= static_cast<double>(n.size());
  my /= static_cast<double>(n.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double dx = std::log(n[i]) - mx;
    sxy += dx * (std::log(t[i]) - my);
    sxx += dx * dx;
  }
  return sxx > 0 ? sxy / sxx : std::nan("");
}

struct Timing {
  double median = 0.0;
  double spread = 0.0;  // (max - min) / median
};

// Linear-interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Spread is the interquartile range over the median, so a single run that
// the scheduler preempted does not dominate it.
Timing summarize_times(std::vector<double> t) {
  std::sort(t.begin(), t.end());
  Timing out;
  out.median = median(t);
  out.spread = out.median > 0 ? (quantile(t, 0.75) - quantile(t, 0.25)) / out.median : 0.0;
  return out;
}

EmbeddingSet random_unit_rows(Index n, Index dim, std::uint64_t seed) {
  SyntheticDistribution d;
  d.mean = Vector::Zero(dim);
  return l2_normalize_rows(sample(d, n, seed));
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::BadMagic:
    case ErrorCode::BadHeader:
    case ErrorCode::TruncatedFile:
    case ErrorCode::SizeMismatch:
    case ErrorCode::RaggedRows:
    case ErrorCode::ParseError:
      return kIo;
    default:
      return kValidation;
  }
}

int resolve_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("HUBNORM_THREADS"); env != nullptr && *env != '\0') {
    RunConfig tmp;
    set_config_value(tmp, "threads", env);
    if (tmp.threads < 1) throw Error(ErrorCode::InvalidConfig, "HUBNORM_THREADS must be >= 1");
    return tmp.threads;
  }
  return 1;
}

void check_paths(const RunConfig& cfg, const std::string& subcommand) {
  std::vector<std::pair<std::string, std::string>> required = {{"queries", cfg.queries}, {"galleries", cfg.galleries}};
  if (needs_banks(cfg)) {
    required.emplace_back("query_bank", cfg.query_bank);
    required.emplace_back("gallery_bank", cfg.gallery_bank);
    if (cfg.bank_sampling == BankSampling::grouped) required.emplace_back("bank_links", cfg.bank_links);
  }
  if (subcommand == "evaluate" || subcommand == "sweep") required.emplace_back("truth", cfg.truth);
  for (const auto& [key, path] : required) {
    if (path.empty()) throw Error(ErrorCode::InvalidConfig, "missing required key '" + key + "'");
    if (!std::filesystem::is_regular_file(path)) {
      throw Error(ErrorCode::InvalidConfig, key + " file '" + path + "' does not exist");
    }
  }
}

Inputs load_inputs(const RunConfig& cfg, bool need_truth) {
  Inputs in{load_embedding_file(cfg.queries, cfg), load_embedding_file(cfg.galleries, cfg), std::nullopt, std::nullopt, {}};
  if (in.queries.dim() != in.galleries.dim()) {
    throw Error(ErrorCode::DimMismatch, "queries have dim " + std::to_string(in.queries.dim()) + ", galleries " +
                                            std::to_string(in.galleries.dim()));
  }
  if (needs_banks(cfg)) {
    in.banks = BankPair{load_embedding_file(cfg.query_bank, cfg), load_embedding_file(cfg.gallery_bank, cfg)};
    if (cfg.bank_sampling == BankSampling::grouped) {
      const auto links = read_ground_truth(cfg.bank_links);
      for (std::size_t i = 0; i < links.correct.size(); ++i) {
        if (links.correct[i].size() != 1) {
          throw Error(ErrorCode::ParseError, cfg.bank_links + ":" + std::to_string(i + 1) + ": expected one index");
        }
        in.bank_links.push_back(links.correct[i][0]);
      }
    }
  }
  if (need_truth) {
    in.truth = read_ground_truth(cfg.truth);
    if (in.truth->n_queries() != in.queries.n_rows()) {
      throw Error(ErrorCode::ShapeMismatch, cfg.truth + ": " + std::to_string(in.truth->n_queries()) +
                                                " lines for " + std::to_string(in.queries.n_rows()) + " queries");
    }
    in.truth->validate(in.galleries.n_rows());
  }
  return in;
}

DualBanks prepare_banks(const Inputs& in, const RunConfig& cfg, double fraction_q, double fraction_g, int threads) {
  const auto& full = *in.banks;
  const BankPair sampled =
      cfg.bank_sampling == BankSampling::grouped
          ? build_banks_grouped(full.query_bank, full.gallery_bank, in.bank_links, fraction_g, cfg.seed)
          : build_banks(full.query_bank, full.gallery_bank, fraction_q, fraction_g, cfg.seed);
  return precompute_bank_similarities(sampled, in.galleries, cfg.metric, cfg.seed, cfg.bank_source, threads);
}

Ranking normalized_ranking(const Inputs& in, const DualBanks* banks, const RunConfig& cfg, int threads) {
  const Index n = in.queries.n_rows();
  std::vector<std::vector<std::int32_t>> rows(static_cast<std::size_t>(n));
  if (banks == nullptr || cfg.norm.method == Method::none) {
    parallel_for(n, threads, [&](Index q) {
      rows[static_cast<std::size_t>(q)] = rank_row(similarity_row(in.queries.row(q), in.galleries, cfg.metric));
    });
  } else {
    const Normalizer normalizer(*banks, in.galleries, cfg.norm);
    parallel_for(n, threads, [&](Index q) {
      rows[static_cast<std::size_t>(q)] = normalizer.normalize_query(in.queries.row(q)).ranking();
    });
  }
  return make_ranking(rows);
}

ReportFields evaluation_fields(const RetrievalReport& report, const RunConfig& cfg, double fraction_q,
                               double fraction_g) {
  ReportFields f = report_fields(report);
  f.emplace_back("metric", std::string(to_string(cfg.metric)));
  f.emplace_back("aggregation", std::string(to_string(cfg.norm.aggregation)));
  f.emplace_back("beta1", format_real(cfg.norm.beta1));
  f.emplace_back("beta2", format_real(cfg.norm.beta2));
  f.emplace_back("bank_fraction_q", format_real(fraction_q));
  f.emplace_back("bank_fraction_g", format_real(fraction_g));
  f.emplace_back("bank_sampling", std::string(to_string(cfg.bank_sampling)));
  f.emplace_back("bank_source", std::string(to_string(cfg.bank_source)));
  f.emplace_back("seed", std::to_string(cfg.seed));
  return f;
}

namespace {

ReportFields evaluate_point(const Inputs& in, const RunConfig& cfg, double fq, double fg, int threads) {
  std::optional<DualBanks> banks;
  if (needs_banks(cfg)) banks = prepare_banks(in, cfg, fq, fg, threads);
  const Ranking ranking = normalized_ranking(in, banks ? &*banks : nullptr, cfg, threads);
  const auto report =
      evaluate_ranking(ranking, *in.truth, std::string(to_string(cfg.norm.method)), cfg.rank_policy, cfg.skewness_k);
  return evaluation_fields(report, cfg, fq, fg);
}

}  // namespace

std::string cmd_normalize(const RunConfig& cfg) {
  const int threads = resolve_threads(cfg);
  const Inputs in = load_inputs(cfg, false);
  std::optional<DualBanks> banks;
  if (needs_banks(cfg)) banks = prepare_banks(in, cfg, cfg.bank_fraction_q, cfg.bank_fraction_g, threads);
  const Index n = in.queries.n_rows();
  const Index top = std::min(cfg.top_k, in.galleries.n_rows());
  std::vector<std::string> blocks(static_cast<std::size_t>(n));
  std::optional<Normalizer> normalizer;
  if (banks) normalizer.emplace(*banks, in.galleries, cfg.norm);
  parallel_for(n, threads, [&](Index q) {
    const NormalizedRow row = normalizer ? normalizer->normalize_query(in.queries.row(q))
                                         : plain_row(similarity_row(in.queries.row(q), in.galleries, cfg.metric));
    const auto order = row.ranking();
    std::string text;
    for (Index r = 0; r < top; ++r) {
      const auto g = order[static_cast<std::size_t>(r)];
      text += std::to_string(q) + "," + std::to_string(r + 1) + "," + std::to_string(g) + "," +
              format_real(row.values(g)) + "," + format_real(row.log_scale) + "\n";
    }
    blocks[static_cast<std::size_t>(q)] = std::move(text);
  });
  std::string out = "query,rank,gallery,value,log_scale\n";
  for (const auto& b : blocks) out += b;
  return out;
}

std::string cmd_evaluate(const RunConfig& cfg) {
  const int threads = resolve_threads(cfg);
  const Inputs in = load_inputs(cfg, true);
  return format_report(evaluate_point(in, cfg, cfg.bank_fraction_q, cfg.bank_fraction_g, threads), cfg.format);
}

std::string cmd_occurrences(const RunConfig& cfg) {
  const int threads = resolve_threads(cfg);
  const Inputs in = load_inputs(cfg, false);
  std::optional<DualBanks> banks;
  if (needs_banks(cfg)) banks = prepare_banks(in, cfg, cfg.bank_fraction_q, cfg.bank_fraction_g, threads);
  const Ranking ranking = normalized_ranking(in, banks ? &*banks : nullptr, cfg, threads);
  const auto occ = k_occurrence(ranking, cfg.occurrence_k);
  std::string out = "gallery,count\n";
  for (std::size_t g = 0; g < occ.counts.size(); ++g) out += std::to_string(g) + "," + std::to_string(occ.counts[g]) + "\n";
  const auto s = summarize(occ);
  out += "\n";
  out += format_report({{"k", std::to_string(occ.k)},
                        {"total", std::to_string(occ.total())},
                        {"max", std::to_string(s.max)},
                        {"min", std::to_string(s.min)},
                        {"median", format_real(s.median)}},
                       ReportFormat::kv);
  return out;
}

std::string cmd_sweep(const RunConfig& cfg) {
  const int threads = resolve_threads(cfg);
  if (cfg.sweep_beta1.empty() || cfg.sweep_beta2.empty() || cfg.sweep_fraction_q.empty() || cfg.sweep_fraction_g.empty()) {
    throw Error(ErrorCode::InvalidConfig, "sweep grid is empty");
  }
  const Inputs in = load_inputs(cfg, true);
  std::vector<ReportFields> rows;
  for (double b1 : cfg.sweep_beta1) {
    for (double b2 : cfg.sweep_beta2) {
      for (double fq : cfg.sweep_fraction_q) {
        for (double fg : cfg.sweep_fraction_g) {
          RunConfig point = cfg;
          point.norm.beta1 = b1;
          point.norm.beta2 = b2;
          rows.push_back(evaluate_point(in, point, fq, fg, threads));
        }
      }
    }
  }
  return format_reports(rows, ReportFormat::csv);
}

std::vector<TheoremReport> cmd_simulate(const RunConfig& cfg) {
  const int threads = resolve_threads(cfg);
  std::vector<TheoremReport> reports;
  for (auto id : cfg.theorems) {
    for (auto family : cfg.families) {
      for (Index dim : cfg.dims) {
        for (auto seed : cfg.seeds) {
          VerifyOptions opts;
          opts.n_trials = cfg.trials;
          opts.seed = seed;
          opts.threads = threads;
          opts.invert_pair = cfg.invert_pair;
          reports.push_back(run_theorem(id, standard_setup(id, family, dim, seed), opts));
        }
      }
    }
  }
  return reports;
}

std::string cmd_bench(const RunConfig& cfg) {
  const int threads = resolve_threads(cfg);
  const Index dim = cfg.bench_dim;
  const Index max_bank = *std::max_element(cfg.bench_banks.begin(), cfg.bench_banks.end());
  const Index max_galleries = *std::max_element(cfg.bench_galleries.begin(), cfg.bench_galleries.end());
  const EmbeddingSet queries = random_unit_rows(cfg.bench_queries, dim, cfg.seed + 3);
  std::string out = "n_galleries,n_bank,precompute_seconds,precompute_spread,per_query_seconds,per_query_spread\n";
  // Slopes: per-query time against N_G at the largest bank, precompute time
  // against bank size at the largest N_G.
  std::vector<double> g_sizes, g_query_t, b_sizes, b_pre_t, b_query_t;
  for (Index n_g : cfg.bench_galleries) {
    const EmbeddingSet galleries = random_unit_rows(n_g, dim, cfg.seed + 4);
    for (Index n_b : cfg.bench_banks) {
      const BankPair banks{random_unit_rows(n_b, dim, cfg.seed + 1), random_unit_rows(n_b, dim, cfg.seed + 2)};
      std::vector<double> pre, per_query;
      double sink = 0.0;
      for (Index rep = 0; rep < cfg.bench_repeats; ++rep) {
        std::optional<DualBanks> dual;
        std::optional<Normalizer> normalizer;
        pre.push_back(seconds_per_call([&] {
          normalizer.reset();
          dual.emplace(precompute_bank_similarities(banks, galleries, cfg.metric, cfg.seed, BankSource::external, threads));
          normalizer.emplace(*dual, galleries, cfg.norm);
        }));
        const auto pass = [&] {
          for (Index q = 0; q < queries.n_rows(); ++q) sink += normalizer->normalize_query(queries.row(q)).values(0);
        };
        pass();  // untimed, so the timed passes do not pay for cold caches
        per_query.push_back(seconds_per_call(pass) / static_cast<double>(queries.n_rows()));
      }
      const auto p = summarize_times(pre);
      const auto t = summarize_times(per_query);
      out += std::to_string(n_g) + "," + std::to_string(n_b) + "," + format_real(p.median) + "," +
             format_real(p.spread) + "," + format_real(t.median) + "," + format_real(t.spread) + "\n";
      if (n_b == max_bank) {
        g_sizes.push_back(static_cast<double>(n_g));
        g_query_t.push_back(t.median);
      }
      if (n_g == max_galleries) {
        b_sizes.push_back(static_cast<double>(n_b));
        b_pre_t.push_back(p.median);
        b_query_t.push_back(t.median);
      }
      if (!std::isfinite(sink)) throw Error(ErrorCode::NonFinite, "benchmark produced a non-finite value");
    }
  }
  out += "\n";
  out += format_report({{"method", std::string(to_string(cfg.norm.method))},
                        {"per_query_slope_vs_galleries", format_real(log_log_slope(g_sizes, g_query_t))},
                        {"per_query_slope_vs_bank", format_real(log_log_slope(b_sizes, b_query_t))},
                        {"precompute_slope_vs_bank", format_real(log_log_slope(b_sizes, b_pre_t))}},
                       ReportFormat::kv);
  return out;
}

void cmd_generate(const RunConfig& cfg) {
  if (cfg.output_dir.empty()) throw Error(ErrorCode::InvalidConfig, "missing required key 'output_dir'");
  PlantedHubParams p;
  p.n_queries = cfg.n_queries;
  p.n_galleries = cfg.n_galleries;
  p.dim = cfg.dim;
  p.hub_pull = cfg.hub_pull;
  p.seed = cfg.seed;
  const auto fixture = planted_hub_benchmark(p);
  const auto banks = planted_hub_banks(fixture, cfg.n_query_bank, cfg.n_gallery_bank, cfg.seed + 1000);
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + cfg.output_dir + "': " + ec.message());
  const auto path = [&](const char* name) { return (std::filesystem::path(cfg.output_dir) / name).string(); };
  write_embeddings(fixture.queries, path("queries.emb"));
  write_embeddings(fixture.galleries, path("galleries.emb"));
  write_embeddings(banks.query_bank, path("query_bank.emb"));
  write_embeddings(banks.gallery_bank, path("gallery_bank.emb"));
  write_ground_truth(fixture.truth, path("truth.txt"));
  write_text(path("run.cfg"), "# planted-hub fixture, hub gallery " + std::to_string(fixture.hub_index) + "\n" +
                                  "queries = " + path("queries.emb") + "\n" + "galleries = " + path("galleries.emb") +
                                  "\n" + "query_bank = " + path("query_bank.emb") + "\n" +
                                  "gallery_bank = " + path("gallery_bank.emb") + "\n" + "truth = " + path("truth.txt") +
                                  "\n");
}

namespace {

struct Command {
  const char* name;
  const char* help;
};

constexpr Command kCommands[] = {
    {"normalize", "write the top galleries of every normalized query"},
    {"evaluate", "R@K, MdR, MnR and k-occurrence skewness of a normalized retrieval run"},
    {"occurrences", "k-occurrence counts per gallery with max / min / median"},
    {"simulate", "Monte-Carlo checks of the expected-distance theorems"},
    {"sweep", "evaluate over a beta1 x beta2 x bank-fraction grid (CSV)"},
    {"bench", "time bank precomputation against per-query normalization"},
    {"generate", "write a planted-hub fixture (embeddings, banks, truth, run.cfg)"},
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hubnorm: hubness-aware similarity normalization for cross-modal retrieval"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::string> config_path;
  for (const auto& c : kCommands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path[c.name], "key=value config file; flags override its values");
    for (const auto& key : config_keys()) {
      if (!key_applies(key, c.name)) continue;
      sub->add_option("--" + std::string(key.name), flag_values[c.name][std::string(key.name)], std::string(key.help));
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    RunConfig cfg;
    if (!config_path[name].empty()) cfg = load_config(config_path[name]);
    for (const auto& key : config_keys()) {
      if (!key_applies(key, name)) continue;
      const std::string k(key.name);
      if (sub->count("--" + k) > 0) set_config_value(cfg, k, flag_values[name][k]);
    }
    validate(cfg);
    resolve_threads(cfg);

    if (name == "simulate") {
      const auto reports = cmd_simulate(cfg);
      std::vector<ReportFields> records;
      std::size_t passed = 0;
      for (const auto& r : reports) {
        records.push_back(report_fields(r));
        passed += r.pass ? 1 : 0;
      }
      emit(cfg, format_reports(records, cfg.format), out);
      err << passed << "/" << reports.size() << " theorem checks passed\n";
      return passed == reports.size() ? kOk : kTheoremFailed;
    }
    if (name == "generate") {
      cmd_generate(cfg);
      return kOk;
    }
    if (name == "bench") {
      emit(cfg, cmd_bench(cfg), out);
      return kOk;
    }
    check_paths(cfg, name);
    if (name == "normalize") emit(cfg, cmd_normalize(cfg), out);
    if (name == "evaluate") emit(cfg, cmd_evaluate(cfg), out);
    if (name == "occurrences") emit(cfg, cmd_occurrences(cfg), out);
    if (name == "sweep") emit(cfg, cmd_sweep(cfg), out);
    return kOk;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace hubnorm::cli
