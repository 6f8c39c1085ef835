#include "hubnorm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace hubnorm {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  // Trailing blank lines are tolerated; blank lines elsewhere are not.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string location(const std::string& origin, std::size_t line, std::size_t column) {
  return origin + ":" + std::to_string(line) + ":" + std::to_string(column);
}

// One CSV line into fields. A quoted field may hold commas and doubled
// quotes; whitespace around a field is dropped.
std::vector<std::string> split_fields(std::string_view line, const std::string& origin, std::size_t line_no) {
  line = trim(line);
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    std::string field;
    if (pos < line.size() && line[pos] == '"') {
      ++pos;
      while (true) {
        if (pos >= line.size()) {
          throw Error(ErrorCode::ParseError, location(origin, line_no, fields.size() + 1) + ": unterminated quote");
        }
        if (line[pos] == '"') {
          if (pos + 1 < line.size() && line[pos + 1] == '"') {
            field += '"';
            pos += 2;
            continue;
          }
          ++pos;
          break;
        }
        field += line[pos++];
      }
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      if (pos < line.size() && line[pos] != ',') {
        throw Error(ErrorCode::ParseError,
                    location(origin, line_no, fields.size() + 1) + ": text after a closing quote");
      }
    } else {
      const auto end = std::min(line.find(',', pos), line.size());
      field = std::string(trim(line.substr(pos, end - pos)));
      pos = end;
    }
    fields.push_back(std::move(field));
    if (pos >= line.size()) break;
    ++pos;  // the comma
  }
  return fields;
}

}  // namespace

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set, DType dtype) {
  if (set.n_rows() > 0xffffffffLL || set.dim() > 0xffffffffLL) {
    throw Error(ErrorCode::SizeMismatch, "matrix too large for EMB1");
  }
  const std::size_t elem = dtype == DType::f64 ? 8 : 4;
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderSize + static_cast<std::size_t>(set.n_rows() * set.dim()) * elem);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(set.n_rows()));
  put_u32(out, static_cast<std::uint32_t>(set.dim()));
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(set.normalized() ? 1 : 0);
  out.push_back(0);
  out.push_back(0);
  const Matrix& m = set.data();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (dtype == DType::f64) {
        std::uint64_t bits = 0;
        const double v = m(i, j);
        std::memcpy(&bits, &v, sizeof bits);
        put_u64(out, bits);
      } else {
        std::uint32_t bits = 0;
        const auto v = static_cast<float>(m(i, j));
        std::memcpy(&bits, &v, sizeof bits);
        put_u32(out, bits);
      }
    }
  }
  return out;
}

EmbeddingSet decode_embeddings(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, origin + ": not an EMB1 file");
  }
  if (bytes.size() < kEmbeddingHeaderSize) throw Error(ErrorCode::TruncatedFile, origin + ": header is truncated");
  const std::uint32_t n_rows = get_u32(bytes.data() + 4);
  const std::uint32_t dim = get_u32(bytes.data() + 8);
  const std::uint8_t dtype = bytes[12];
  const std::uint8_t normalized = bytes[13];
  if (dtype > 1) throw Error(ErrorCode::BadHeader, origin + ": unknown dtype " + std::to_string(dtype));
  if (normalized > 1) throw Error(ErrorCode::BadHeader, origin + ": normalized flag must be 0 or 1");
  if (bytes[14] != 0 || bytes[15] != 0) throw Error(ErrorCode::BadHeader, origin + ": reserved bytes must be zero");
  if (n_rows == 0 || dim == 0) throw Error(ErrorCode::BadHeader, origin + ": empty matrix");
  const std::uint64_t elem = dtype == 1 ? 8 : 4;
  const std::uint64_t expected = kEmbeddingHeaderSize + std::uint64_t{n_rows} * dim * elem;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::TruncatedFile, origin + ": payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                                              std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::SizeMismatch, origin + ": " + std::to_string(bytes.size() - expected) + " trailing bytes");
  }
  Matrix m(n_rows, dim);
  const std::uint8_t* p = bytes.data() + kEmbeddingHeaderSize;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (dtype == 1) {
        const std::uint64_t bits = get_u64(p);
        std::memcpy(&m(i, j), &bits, sizeof bits);
        p += 8;
      } else {
        const std::uint32_t bits = get_u32(p);
        float f = 0;
        std::memcpy(&f, &bits, sizeof bits);
        m(i, j) = f;
        p += 4;
      }
    }
  }
  if (!m.allFinite()) throw Error(ErrorCode::NonFinite, origin + ": payload contains NaN or Inf");
  if (normalized && dtype == 0) return l2_normalize_rows(EmbeddingSet(std::move(m)));
  return EmbeddingSet(std::move(m), normalized != 0);
}

EmbeddingSet read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes, path);
}

void write_embeddings(const EmbeddingSet& set, const std::string& path, DType dtype) {
  const auto bytes = encode_embeddings(set, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

EmbeddingSet parse_csv_embeddings(std::string_view text, bool has_header, const std::string& origin) {
  const auto lines = split_lines(text);
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  for (std::size_t ln = has_header ? 1 : 0; ln < lines.size(); ++ln) {
    const auto fields = split_fields(lines[ln], origin, ln + 1);
    if (rows == 0) {
      cols = fields.size();
    } else if (fields.size() != cols) {
      throw Error(ErrorCode::RaggedRows, location(origin, ln + 1, 1) + ": " + std::to_string(fields.size()) +
                                             " fields, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string_view f = fields[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, location(origin, ln + 1, c + 1) + ": '" + std::string(f) + "' is not a finite number");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::ParseError, origin + ": no data rows");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Index>(i / cols), static_cast<Index>(i % cols)) = values[i];
  return EmbeddingSet(std::move(m));
}

EmbeddingSet read_csv_embeddings(const std::string& path, bool has_header) {
  return parse_csv_embeddings(read_text(path), has_header, path);
}

GroundTruth parse_ground_truth(std::string_view text, const std::string& origin) {
  GroundTruth truth;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::vector<std::int32_t> row;
    const auto fields = split_fields(lines[ln], origin, ln + 1);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string_view f = fields[c];
      std::int32_t v = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || v < 0) {
        throw Error(ErrorCode::ParseError, location(origin, ln + 1, c + 1) + ": '" + std::string(f) + "' is not a gallery index");
      }
      row.push_back(v);
    }
    truth.correct.push_back(std::move(row));
  }
  return truth;
}

GroundTruth read_ground_truth(const std::string& path) { return parse_ground_truth(read_text(path), path); }

void write_ground_truth(const GroundTruth& truth, const std::string& path) {
  std::string text;
  for (const auto& row : truth.correct) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ',';
      text += std::to_string(row[i]);
    }
    text += '\n';
  }
  write_text(path, text);
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "kv") return ReportFormat::kv;
  if (text == "csv") return ReportFormat::csv;
  throw Error(ErrorCode::InvalidConfig, "unknown report format '" + std::string(text) + "'");
}

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  // Shortest text that parses back to the same double (at most 17 digits).
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

ReportFields report_fields(const RetrievalReport& report) {
  ReportFields f;
  f.emplace_back("method", report.method);
  f.emplace_back("n_queries", std::to_string(report.n_queries));
  f.emplace_back("n_galleries", std::to_string(report.n_galleries));
  for (const auto& [k, v] : report.r_at) f.emplace_back("r_at_" + std::to_string(k), format_real(v));
  f.emplace_back("mdr", format_real(report.mdr));
  f.emplace_back("mnr", format_real(report.mnr));
  f.emplace_back("skewness_k", std::to_string(report.skewness_k));
  f.emplace_back("skewness", report.skewness ? format_real(*report.skewness) : "nan");
  const auto summary = summarize(report.occurrence);
  f.emplace_back("occurrence_max", std::to_string(summary.max));
  f.emplace_back("occurrence_min", std::to_string(summary.min));
  f.emplace_back("occurrence_median", format_real(summary.median));
  std::string hist;
  const auto h = report.occurrence.histogram();
  for (std::size_t c = 0; c < h.size(); ++c) {
    if (c) hist += ';';
    hist += std::to_string(h[c]);
  }
  f.emplace_back("k_occurrence_histogram", hist);
  return f;
}

ReportFields report_fields(const TheoremReport& report) {
  return {
      {"theorem_id", std::string(to_string(report.theorem_id))},
      {"family", report.family},
      {"dim", std::to_string(report.dim)},
      {"seed", std::to_string(report.seed)},
      {"n_trials", std::to_string(report.n_trials)},
      {"empirical_delta", format_real(report.empirical_delta)},
      {"analytic_delta", format_real(report.analytic_delta)},
      {"standard_error", format_real(report.standard_error)},
      {"pass", report.pass ? "true" : "false"},
  };
}

namespace {

std::string csv_cell(const std::string& v) {
  if (v.find_first_of(",\"\n\r") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_report(const ReportFields& fields, ReportFormat format) {
  return format_reports({fields}, format);
}

std::string format_reports(const std::vector<ReportFields>& records, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::kv) {
    for (std::size_t r = 0; r < records.size(); ++r) {
      if (r) out += '\n';
      for (const auto& [k, v] : records[r]) out += k + "=" + v + "\n";
    }
    return out;
  }
  if (records.empty()) return out;
  for (std::size_t i = 0; i < records.front().size(); ++i) {
    if (i) out += ',';
    out += csv_cell(records.front()[i].first);
  }
  out += '\n';
  for (const auto& rec : records) {
    if (rec.size() != records.front().size()) throw Error(ErrorCode::ShapeMismatch, "csv records differ in shape");
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out += ',';
      out += csv_cell(rec[i].second);
    }
    out += '\n';
  }
  return out;
}

void write_text(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> out;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) out.push_back(split_fields(lines[ln], "<csv>", ln + 1));
  return out;
}

}  // namespace hubnorm
