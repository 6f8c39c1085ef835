#include <doctest.h>

#include <set>

#include "hubnorm/config.hpp"
#include "support.hpp"

using namespace hubnorm;
using support::error_of;

TEST_CASE("defaults") {
  const RunConfig cfg;
  CHECK(cfg.norm.method == Method::dual_is);
  CHECK(cfg.norm.beta1 == 20.0);
  CHECK(cfg.norm.beta2 == 20.0);
  CHECK(cfg.norm.aggregation == Aggregation::multiply);
  CHECK(cfg.metric == Metric::cosine);
  CHECK(cfg.bank_fraction_q == 1.0);
  CHECK(cfg.queries.empty());
  CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("config text sets keys and ignores comments") {
  RunConfig cfg;
  apply_config_text(cfg,
                    "# a run\n"
                    "method = dual_dis\n"
                    "\n"
                    "beta1=35.5   # sharper gallery branch\n"
                    "aggregation = add\r\n"
                    "activation_k = 3\n"
                    "metric = neg_sq_l2\n"
                    "bank_fraction_g = 0.25\n"
                    "literal_query_branch = true\n"
                    "sweep_beta2 = 5, 10,20\n"
                    "dims = 4,16\n"
                    "families = laplacian\n"
                    "queries = data/q.emb\n");
  CHECK(cfg.norm.method == Method::dual_dis);
  CHECK(cfg.norm.beta1 == 35.5);
  CHECK(cfg.norm.aggregation == Aggregation::add);
  CHECK(cfg.norm.activation_k == 3);
  CHECK(cfg.norm.literal_query_branch);
  CHECK(cfg.metric == Metric::neg_sq_l2);
  CHECK(cfg.bank_fraction_g == 0.25);
  CHECK(cfg.sweep_beta2 == std::vector<double>{5, 10, 20});
  CHECK(cfg.dims == std::vector<Index>{4, 16});
  CHECK(cfg.families == std::vector<Family>{Family::laplacian});
  CHECK(cfg.queries == "data/q.emb");

  // A later assignment overrides an earlier one.
  set_config_value(cfg, "beta1", "7");
  CHECK(cfg.norm.beta1 == 7.0);
}

TEST_CASE("unknown keys and bad values name the line") {
  RunConfig cfg;
  try {
    apply_config_text(cfg, "beta1 = 2\nbeta3 = 1\n", "run.cfg");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("beta3") != std::string::npos);
  }
  CHECK(error_of([&] { apply_config_text(cfg, "method\n"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { set_config_value(cfg, "beta1", "fast"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { set_config_value(cfg, "activation_k", "1.5"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { set_config_value(cfg, "method", "softmax"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { set_config_value(cfg, "normalize_inputs", "maybe"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { set_config_value(cfg, "theorems", "T1,T9"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([] { load_config("/nonexistent/run.cfg"); }) == ErrorCode::IoError);
}

TEST_CASE("validation rejects out-of-range settings") {
  const auto invalid = [](auto&& mutate) {
    RunConfig cfg;
    mutate(cfg);
    return error_of([&] { validate(cfg); }) == ErrorCode::InvalidConfig;
  };
  CHECK(invalid([](RunConfig& c) { c.norm.beta1 = 0.0; }));
  CHECK(invalid([](RunConfig& c) { c.norm.beta2 = -3.0; }));
  CHECK(invalid([](RunConfig& c) { c.norm.activation_k = 0; }));
  CHECK(invalid([](RunConfig& c) { c.bank_fraction_q = 0.0; }));
  CHECK(invalid([](RunConfig& c) { c.bank_fraction_g = 1.01; }));
  CHECK(invalid([](RunConfig& c) { c.sweep_fraction_q = {0.5, 0.0}; }));
  CHECK(invalid([](RunConfig& c) { c.sweep_beta1 = {10, -1}; }));
  CHECK(invalid([](RunConfig& c) { c.skewness_k = 0; }));
  CHECK(invalid([](RunConfig& c) { c.trials = 1; }));
  CHECK(invalid([](RunConfig& c) { c.seeds.clear(); }));
  CHECK(invalid([](RunConfig& c) { c.bench_banks.clear(); }));
  CHECK(invalid([](RunConfig& c) { c.hub_pull = 1.0; }));
  CHECK(invalid([](RunConfig& c) { c.bank_sampling = BankSampling::grouped; }));
  CHECK_FALSE(invalid([](RunConfig& c) {
    c.bank_sampling = BankSampling::grouped;
    c.bank_links = "links.txt";
  }));
}

TEST_CASE("key table") {
  std::set<std::string_view> names;
  for (const auto& key : config_keys()) {
    CHECK(names.insert(key.name).second);
    CHECK_FALSE(key.help.empty());
  }
  for (auto required : {"method", "beta1", "beta2", "activation_k", "csls_k", "aggregation", "metric",
                        "bank_fraction_q", "bank_fraction_g", "seed", "queries", "galleries", "query_bank",
                        "gallery_bank", "truth"}) {
    CHECK(names.count(required) == 1);
  }
  const auto find = [](std::string_view name) {
    for (const auto& k : config_keys())
      if (k.name == name) return k;
    FAIL("missing key");
    return config_keys().front();
  };
  CHECK(key_applies(find("seed"), "simulate"));
  CHECK(key_applies(find("beta1"), "evaluate"));
  CHECK_FALSE(key_applies(find("beta1"), "simulate"));
  CHECK_FALSE(key_applies(find("trials"), "evaluate"));
}
