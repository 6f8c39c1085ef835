#include "hubnorm/config.hpp"

#include <charconv>
#include <functional>
#include <limits>

namespace hubnorm {

namespace {

using Setter = std::function<void(RunConfig&, std::string_view)>;

struct KeyEntry {
  ConfigKey key;
  Setter set;
};

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw Error(ErrorCode::InvalidConfig,
              "key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(expected));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_real(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  v = trim(v);
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

template <typename T, typename Parse>
std::vector<T> to_list(std::string_view v, Parse parse) {
  std::vector<T> out;
  std::size_t start = 0;
  while (true) {
    const auto end = v.find(',', start);
    out.push_back(parse(trim(v.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start))));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

/// Library parsers throw InvalidConfig without the key; add it.
template <typename F>
auto with_key(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, "key '" + std::string(key) + "': " + e.what());
  }
}

TheoremId parse_theorem(std::string_view text) {
  if (text == "T1") return TheoremId::T1;
  if (text == "T2") return TheoremId::T2;
  if (text == "T3") return TheoremId::T3;
  if (text == "C1") return TheoremId::C1;
  throw Error(ErrorCode::InvalidConfig, "unknown theorem '" + std::string(text) + "'");
}

#define HUBNORM_KEY(name, help, subs, body) \
  KeyEntry { ConfigKey{name, help, subs}, [](RunConfig & c, std::string_view v) body }

constexpr std::string_view kPipeline = "normalize evaluate occurrences sweep";

const std::vector<KeyEntry>& table() {
  static const std::vector<KeyEntry> entries = {
      HUBNORM_KEY("method", "none|is|dis|dual_is|dual_dis|gc|csls", "normalize evaluate occurrences sweep bench",
                  { c.norm.method = with_key("method", [&] { return parse_method(trim(v)); }); }),
      HUBNORM_KEY("beta1", "gallery-bank inverse temperature", "normalize evaluate occurrences sweep bench",
                  { c.norm.beta1 = to_real("beta1", v); }),
      HUBNORM_KEY("beta2", "query-bank inverse temperature", "normalize evaluate occurrences sweep bench",
                  { c.norm.beta2 = to_real("beta2", v); }),
      HUBNORM_KEY("aggregation", "multiply|add: how the two branches combine", "normalize evaluate occurrences sweep bench",
                  { c.norm.aggregation = with_key("aggregation", [&] { return parse_aggregation(trim(v)); }); }),
      HUBNORM_KEY("activation_k", "top-k used to build activation sets", kPipeline,
                  { c.norm.activation_k = to_int<Index>("activation_k", v); }),
      HUBNORM_KEY("csls_k", "neighbourhood size for CSLS", kPipeline, { c.norm.csls_k = to_int<Index>("csls_k", v); }),
      HUBNORM_KEY("literal_query_branch", "gated query branch uses the gallery-bank value", kPipeline,
                  { c.norm.literal_query_branch = to_bool("literal_query_branch", v); }),
      HUBNORM_KEY("metric", "cosine|neg_sq_l2", "normalize evaluate occurrences sweep bench",
                  { c.metric = with_key("metric", [&] { return parse_metric(trim(v)); }); }),
      HUBNORM_KEY("normalize_inputs", "L2-normalize embeddings on load (cosine needs unit rows)", kPipeline,
                  { c.normalize_inputs = to_bool("normalize_inputs", v); }),
      HUBNORM_KEY("bank_fraction_q", "fraction of the query bank kept, in (0, 1]", kPipeline,
                  { c.bank_fraction_q = to_real("bank_fraction_q", v); }),
      HUBNORM_KEY("bank_fraction_g", "fraction of the gallery bank kept, in (0, 1]", kPipeline,
                  { c.bank_fraction_g = to_real("bank_fraction_g", v); }),
      HUBNORM_KEY("bank_sampling", "independent|grouped (grouped needs bank_links)", kPipeline,
                  { c.bank_sampling = with_key("bank_sampling", [&] { return parse_bank_sampling(trim(v)); }); }),
      HUBNORM_KEY("bank_source", "train|validation|external, recorded as provenance", kPipeline,
                  { c.bank_source = with_key("bank_source", [&] { return parse_bank_source(trim(v)); }); }),
      HUBNORM_KEY("seed", "seed for bank sampling, simulation and fixtures", "*",
                  { c.seed = to_int<std::uint64_t>("seed", v); }),
      HUBNORM_KEY("rank_policy", "best|mean_over_correct for many-to-one ground truth", "evaluate sweep",
                  { c.rank_policy = with_key("rank_policy", [&] { return parse_rank_policy(trim(v)); }); }),
      HUBNORM_KEY("skewness_k", "k of the k-occurrence skewness", "evaluate sweep",
                  { c.skewness_k = to_int<Index>("skewness_k", v); }),
      HUBNORM_KEY("occurrence_k", "k of the occurrence counts", "occurrences",
                  { c.occurrence_k = to_int<Index>("occurrence_k", v); }),
      HUBNORM_KEY("top_k", "galleries written per query", "normalize", { c.top_k = to_int<Index>("top_k", v); }),
      HUBNORM_KEY("format", "kv|csv report format", "evaluate simulate",
                  { c.format = with_key("format", [&] { return parse_report_format(trim(v)); }); }),
      HUBNORM_KEY("csv_header", "CSV embedding inputs start with a header row", kPipeline,
                  { c.csv_header = to_bool("csv_header", v); }),
      HUBNORM_KEY("threads", "worker threads (default: HUBNORM_THREADS or 1)", "*",
                  { c.threads = to_int<int>("threads", v); }),
      HUBNORM_KEY("queries", "test query embeddings (.emb or .csv)", kPipeline, { c.queries = trim(v); }),
      HUBNORM_KEY("galleries", "test gallery embeddings (.emb or .csv)", kPipeline, { c.galleries = trim(v); }),
      HUBNORM_KEY("query_bank", "query bank embeddings (.emb or .csv)", kPipeline, { c.query_bank = trim(v); }),
      HUBNORM_KEY("gallery_bank", "gallery bank embeddings (.emb or .csv)", kPipeline, { c.gallery_bank = trim(v); }),
      HUBNORM_KEY("truth", "ground truth: one line per query, comma-separated gallery indices", "evaluate sweep",
                  { c.truth = trim(v); }),
      HUBNORM_KEY("bank_links", "grouped sampling: gallery-bank row of each query-bank row, one per line", kPipeline,
                  { c.bank_links = trim(v); }),
      HUBNORM_KEY("output", "output file (default: standard output)", "*", { c.output = trim(v); }),
      HUBNORM_KEY("sweep_beta1", "comma-separated beta1 grid", "sweep",
                  { c.sweep_beta1 = to_list<double>(v, [](auto s) { return to_real("sweep_beta1", s); }); }),
      HUBNORM_KEY("sweep_beta2", "comma-separated beta2 grid", "sweep",
                  { c.sweep_beta2 = to_list<double>(v, [](auto s) { return to_real("sweep_beta2", s); }); }),
      HUBNORM_KEY("sweep_fraction_q", "comma-separated query-bank fraction grid", "sweep",
                  { c.sweep_fraction_q = to_list<double>(v, [](auto s) { return to_real("sweep_fraction_q", s); }); }),
      HUBNORM_KEY("sweep_fraction_g", "comma-separated gallery-bank fraction grid", "sweep",
                  { c.sweep_fraction_g = to_list<double>(v, [](auto s) { return to_real("sweep_fraction_g", s); }); }),
      HUBNORM_KEY("theorems", "comma-separated subset of T1,T2,T3,C1", "simulate", {
        c.theorems = to_list<TheoremId>(v, [](auto s) { return with_key("theorems", [&] { return parse_theorem(s); }); });
      }),
      HUBNORM_KEY("families", "comma-separated subset of gaussian,uniform_box,laplacian", "simulate", {
        c.families = to_list<Family>(v, [](auto s) { return with_key("families", [&] { return parse_family(s); }); });
      }),
      HUBNORM_KEY("dims", "comma-separated dimensions", "simulate",
                  { c.dims = to_list<Index>(v, [](auto s) { return to_int<Index>("dims", s); }); }),
      HUBNORM_KEY("seeds", "comma-separated simulation seeds", "simulate",
                  { c.seeds = to_list<std::uint64_t>(v, [](auto s) { return to_int<std::uint64_t>("seeds", s); }); }),
      HUBNORM_KEY("trials", "Monte-Carlo trials per report", "simulate", { c.trials = to_int<Index>("trials", v); }),
      HUBNORM_KEY("invert_pair", "debug: order pairs the wrong way round (reports must fail)", "simulate",
                  { c.invert_pair = to_bool("invert_pair", v); }),
      HUBNORM_KEY("bench_galleries", "comma-separated test gallery sizes", "bench",
                  { c.bench_galleries = to_list<Index>(v, [](auto s) { return to_int<Index>("bench_galleries", s); }); }),
      HUBNORM_KEY("bench_banks", "comma-separated rows per bank", "bench",
                  { c.bench_banks = to_list<Index>(v, [](auto s) { return to_int<Index>("bench_banks", s); }); }),
      HUBNORM_KEY("bench_queries", "queries timed per size", "bench", { c.bench_queries = to_int<Index>("bench_queries", v); }),
      HUBNORM_KEY("bench_dim", "embedding dimension", "bench", { c.bench_dim = to_int<Index>("bench_dim", v); }),
      HUBNORM_KEY("bench_repeats", "repeat runs per size", "bench", { c.bench_repeats = to_int<Index>("bench_repeats", v); }),
      HUBNORM_KEY("n_queries", "fixture queries", "generate", { c.n_queries = to_int<Index>("n_queries", v); }),
      HUBNORM_KEY("n_galleries", "fixture galleries", "generate", { c.n_galleries = to_int<Index>("n_galleries", v); }),
      HUBNORM_KEY("dim", "fixture dimension", "generate", { c.dim = to_int<Index>("dim", v); }),
      HUBNORM_KEY("hub_pull", "pull of the planted hub toward the gallery centroid, in [0, 1)", "generate",
                  { c.hub_pull = to_real("hub_pull", v); }),
      HUBNORM_KEY("n_query_bank", "fixture query bank rows", "generate", { c.n_query_bank = to_int<Index>("n_query_bank", v); }),
      HUBNORM_KEY("n_gallery_bank", "fixture gallery bank rows", "generate",
                  { c.n_gallery_bank = to_int<Index>("n_gallery_bank", v); }),
      HUBNORM_KEY("output_dir", "directory receiving the fixture files", "generate", { c.output_dir = trim(v); }),
  };
  return entries;
}

#undef HUBNORM_KEY

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : table()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

bool key_applies(const ConfigKey& key, std::string_view subcommand) {
  if (key.subcommands == "*") return true;
  std::string_view subs = key.subcommands;
  while (!subs.empty()) {
    const auto sp = subs.find(' ');
    if (subs.substr(0, sp) == subcommand) return true;
    if (sp == std::string_view::npos) break;
    subs.remove_prefix(sp + 1);
  }
  return false;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& e : table()) {
    if (e.key.name == key) {
      e.set(cfg, value);
      return;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(e.code(), origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  apply_config_text(cfg, read_text(path), path);
  return cfg;
}

void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  try {
    cfg.norm.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  auto check_fraction = [&](std::string_view name, double f) {
    if (!(f > 0.0 && f <= 1.0)) fail(std::string(name) + " must lie in (0, 1]");
  };
  check_fraction("bank_fraction_q", cfg.bank_fraction_q);
  check_fraction("bank_fraction_g", cfg.bank_fraction_g);
  for (double f : cfg.sweep_fraction_q) check_fraction("sweep_fraction_q", f);
  for (double f : cfg.sweep_fraction_g) check_fraction("sweep_fraction_g", f);
  for (double b : cfg.sweep_beta1) if (!(b > 0.0) || !std::isfinite(b)) fail("sweep_beta1 entries must be positive");
  for (double b : cfg.sweep_beta2) if (!(b > 0.0) || !std::isfinite(b)) fail("sweep_beta2 entries must be positive");
  if (cfg.skewness_k < 1) fail("skewness_k must be >= 1");
  if (cfg.occurrence_k < 1) fail("occurrence_k must be >= 1");
  if (cfg.top_k < 1) fail("top_k must be >= 1");
  if (cfg.threads < 0) fail("threads must be >= 1");
  if (cfg.trials < 2) fail("trials must be >= 2");
  for (Index d : cfg.dims) if (d < 1) fail("dims entries must be >= 1");
  if (cfg.theorems.empty() || cfg.families.empty() || cfg.dims.empty() || cfg.seeds.empty()) fail("simulation grid is empty");
  for (Index n : cfg.bench_galleries) if (n < 1) fail("bench_galleries entries must be >= 1");
  for (Index n : cfg.bench_banks) if (n < 1) fail("bench_banks entries must be >= 1");
  if (cfg.bench_galleries.empty() || cfg.bench_banks.empty()) fail("bench grid is empty");
  if (cfg.bench_queries < 1 || cfg.bench_dim < 1 || cfg.bench_repeats < 1) {
    fail("bench sizes must be >= 1");
  }
  if (cfg.n_queries < 1 || cfg.n_galleries < 1 || cfg.dim < 2 || cfg.n_query_bank < 1 || cfg.n_gallery_bank < 1) {
    fail("fixture sizes must be >= 1 (dim >= 2)");
  }
  if (!(cfg.hub_pull >= 0.0 && cfg.hub_pull < 1.0)) fail("hub_pull must lie in [0, 1)");
  if (cfg.bank_sampling == BankSampling::grouped && cfg.bank_links.empty()) fail("bank_sampling=grouped needs bank_links");
}

}  // namespace hubnorm
