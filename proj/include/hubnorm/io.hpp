#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hubnorm/embeddings.hpp"
#include "hubnorm/hubsim.hpp"
#include "hubnorm/metrics.hpp"

namespace hubnorm {

// EMB1 layout, little-endian:
//   0  "EMB1"
//   4  u32 n_rows
//   8  u32 dim
//   12 u8  dtype (0 = f32, 1 = f64)
//   13 u8  normalized (0 / 1)
//   14 2 reserved zero bytes
//   16 row-major payload
inline constexpr std::size_t kEmbeddingHeaderSize = 16;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct EmbeddingFileHeader {
  std::uint32_t n_rows = 0;
  std::uint32_t dim = 0;
  DType dtype = DType::f64;
  bool normalized = false;
};

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set, DType dtype = DType::f64);

/// Parses a complete EMB1 image. 32-bit payloads widen to 64-bit; a 32-bit
/// payload flagged normalized is renormalized in 64-bit after widening.
EmbeddingSet decode_embeddings(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

EmbeddingSet read_embeddings(const std::string& path);
void write_embeddings(const EmbeddingSet& set, const std::string& path, DType dtype = DType::f64);

EmbeddingSet read_csv_embeddings(const std::string& path, bool has_header);
EmbeddingSet parse_csv_embeddings(std::string_view text, bool has_header, const std::string& origin = "<memory>");

/// One line per query, comma-separated correct gallery indices.
GroundTruth read_ground_truth(const std::string& path);
GroundTruth parse_ground_truth(std::string_view text, const std::string& origin = "<memory>");
void write_ground_truth(const GroundTruth& truth, const std::string& path);

enum class ReportFormat { kv, csv };
ReportFormat parse_report_format(std::string_view text);

/// Ordered (key, value) pairs; the order is the documented output order.
using ReportFields = std::vector<std::pair<std::string, std::string>>;

/// Shortest-round-trip text of a real, at most 17 significant digits.
std::string format_real(double value);

ReportFields report_fields(const RetrievalReport& report);
ReportFields report_fields(const TheoremReport& report);

/// kv: one `key=value` per line. csv: one header row and one data row.
std::string format_report(const ReportFields& fields, ReportFormat format);
/// Several records: kv blocks separated by blank lines; csv shares one header.
std::string format_reports(const std::vector<ReportFields>& records, ReportFormat format);

void write_text(const std::string& path, std::string_view text);
std::string read_text(const std::string& path);

template <typename Report>
void write_report(const Report& report, const std::string& path, ReportFormat format) {
  write_text(path, format_report(report_fields(report), format));
}

/// Splits CSV text into records of unquoted fields.
std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);

}  // namespace hubnorm
