#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hubnorm/config.hpp"

namespace hubnorm::cli {

enum ExitCode : int { kOk = 0, kTheoremFailed = 1, kValidation = 2, kIo = 3 };

/// Maps a library error to the exit-code contract.
int exit_code_for(ErrorCode code);

/// `threads` when set, else HUBNORM_THREADS, else 1.
int resolve_threads(const RunConfig& cfg);

/// Test embeddings and the full (unsampled) banks as loaded from disk.
struct Inputs {
  EmbeddingSet queries;
  EmbeddingSet galleries;
  std::optional<BankPair> banks;  // absent for method=none
  std::optional<GroundTruth> truth;
  std::vector<Index> bank_links;
};

/// Checks that every path the subcommand needs is set and exists. Runs
/// before any file is read.
void check_paths(const RunConfig& cfg, const std::string& subcommand);

Inputs load_inputs(const RunConfig& cfg, bool need_truth);

/// Samples the banks with the given fractions and precomputes their
/// similarities to the test galleries.
DualBanks prepare_banks(const Inputs& in, const RunConfig& cfg, double fraction_q, double fraction_g, int threads);

/// Normalizes every query independently and ranks the galleries.
Ranking normalized_ranking(const Inputs& in, const DualBanks* banks, const RunConfig& cfg, int threads);

/// Report fields followed by the run's bank provenance.
ReportFields evaluation_fields(const RetrievalReport& report, const RunConfig& cfg, double fraction_q,
                               double fraction_g);

std::string cmd_normalize(const RunConfig& cfg);
std::string cmd_evaluate(const RunConfig& cfg);
std::string cmd_occurrences(const RunConfig& cfg);
std::string cmd_sweep(const RunConfig& cfg);
/// Returns the reports; the caller decides the exit code.
std::vector<TheoremReport> cmd_simulate(const RunConfig& cfg);
std::string cmd_bench(const RunConfig& cfg);
void cmd_generate(const RunConfig& cfg);

/// Full command line (without the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hubnorm::cli
