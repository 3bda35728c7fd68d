#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/core/errors.hpp"
#include "lfaa/eval/harness.hpp"

namespace lfaa {

// Column layouts are fixed; readers reject files whose header differs.
inline constexpr const char* kReportsHeader =
    "source,victim,attack,target,white_box,n_images,n_target_hits,n_label_flips,tasr,uasr,n_clean_correct,"
    "n_flips_of_correct,uasr_correct";
inline constexpr const char* kPredictionsHeader = "source,victim,attack,target,image_index,true_label,clean_pred,adv_pred";

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw FormatError("not an integer: '" + s + "'");
  return v;
}

namespace detail {

inline void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw ArgumentError("identifier '" + s + "' cannot be written to a CSV field");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) throw FormatError(path.string() + ": unexpected header");
  const std::size_t cols = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != cols) throw FormatError(path.string() + ": row with " + std::to_string(row.size()) + " fields");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_reports_csv(const std::filesystem::path& path, const std::vector<AttackReport>& reports) {
  auto out = detail::open_out(path);
  out << kReportsHeader << '\n';
  for (const auto& r : reports) {
    for (const auto* s : {&r.source, &r.victim, &r.attack}) detail::check_csv_field(*s);
    out << r.source << ',' << r.victim << ',' << r.attack << ',' << r.target << ',' << (r.white_box ? 1 : 0) << ','
        << r.n_images << ',' << r.n_target_hits << ',' << r.n_label_flips << ',' << format_double(r.tasr) << ','
        << format_double(r.uasr) << ',' << r.n_clean_correct << ',' << r.n_flips_of_correct << ','
        << format_double(r.uasr_correct) << '\n';
  }
}

inline std::vector<AttackReport> read_reports_csv(const std::filesystem::path& path) {
  std::vector<AttackReport> out;
  for (const auto& f : detail::read_csv(path, kReportsHeader)) {
    AttackReport r;
    r.source = f[0];
    r.victim = f[1];
    r.attack = f[2];
    r.target = parse_int(f[3]);
    r.white_box = parse_int(f[4]) != 0;
    r.n_images = parse_int(f[5]);
    r.n_target_hits = parse_int(f[6]);
    r.n_label_flips = parse_int(f[7]);
    r.tasr = parse_double(f[8]);
    r.uasr = parse_double(f[9]);
    r.n_clean_correct = parse_int(f[10]);
    r.n_flips_of_correct = parse_int(f[11]);
    r.uasr_correct = parse_double(f[12]);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRecord>& log) {
  auto out = detail::open_out(path);
  out << kPredictionsHeader << '\n';
  for (const auto& p : log) {
    for (const auto* s : {&p.source, &p.victim, &p.attack}) detail::check_csv_field(*s);
    out << p.source << ',' << p.victim << ',' << p.attack << ',' << p.target << ',' << p.image_index << ','
        << p.true_label << ',' << p.clean_pred << ',' << p.adv_pred << '\n';
  }
}

inline std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  for (const auto& f : detail::read_csv(path, kPredictionsHeader)) {
    out.push_back(PredictionRecord{f[0], f[1], f[2], parse_int(f[3]), parse_int(f[4]), parse_int(f[5]), parse_int(f[6]),
                                   parse_int(f[7])});
  }
  return out;
}

/// Mean TASR per (source, victim) in percent; one row per source.
inline void write_transfer_table_csv(const std::filesystem::path& path, const TransferMatrix& m) {
  auto out = detail::open_out(path);
  out << "source,attack";
  for (const auto& v : m.models) out << ',' << v;
  out << '\n';
  for (std::size_t row = 0; row < m.sources.size(); ++row) {
    out << m.models[m.sources[row]] << ',' << m.attack;
    for (std::size_t v = 0; v < m.models.size(); ++v) out << ',' << format_double(100.0 * m.mean_tasr(row, v));
    out << '\n';
  }
}

inline nlohmann::json report_json(const AttackReport& r) {
  return {{"source", r.source},     {"victim", r.victim},       {"attack", r.attack},
          {"target", r.target},     {"white_box", r.white_box}, {"n_images", r.n_images},
          {"tasr", r.tasr},         {"uasr", r.uasr},           {"uasr_correct", r.uasr_correct}};
}

inline nlohmann::json matrix_json(const TransferMatrix& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t row = 0; row < m.sources.size(); ++row)
    for (std::size_t v = 0; v < m.models.size(); ++v)
      cells.push_back({{"source", m.models[m.sources[row]]},
                       {"victim", m.models[v]},
                       {"white_box", m.sources[row] == v},
                       {"mean_tasr", m.mean_tasr(row, v)}});
  return {{"attack", m.attack}, {"models", m.models}, {"targets", m.targets}, {"cells", cells}};
}

inline void write_ablation_csv(const std::filesystem::path& path, const AblationSummary& a) {
  auto out = detail::open_out(path);
  out << "k,white_box_tasr,mean_black_box_tasr,score";
  for (const auto& v : a.models) out << ",tasr_" << v;
  out << ",argmax\n";
  for (const auto& r : a.rows) {
    out << r.k << ',' << format_double(r.white_box_tasr) << ',' << format_double(r.mean_black_box_tasr) << ','
        << format_double(r.score);
    for (double t : r.victim_tasr) out << ',' << format_double(t);
    out << ',' << (r.k == a.argmax_k ? 1 : 0) << '\n';
  }
}

inline nlohmann::json ablation_json(const AblationSummary& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : a.rows)
    rows.push_back({{"k", r.k},
                    {"white_box_tasr", r.white_box_tasr},
                    {"mean_black_box_tasr", r.mean_black_box_tasr},
                    {"score", r.score},
                    {"victim_tasr", r.victim_tasr}});
  return {{"source", a.source}, {"models", a.models}, {"targets", a.targets}, {"rows", rows}, {"argmax_k", a.argmax_k}};
}

// ---- plots ---------------------------------------------------------------

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits = 1) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

}  // namespace detail

/// Heatmap of mean TASR, sources as rows and victims as columns; white-box cells get a '*'.
inline void write_transfer_heatmap_svg(const std::filesystem::path& path, const TransferMatrix& m) {
  const int cell = 70, left = 110, top = 60;
  const int w = left + cell * static_cast<int>(m.models.size()) + 20;
  const int h = top + cell * static_cast<int>(m.sources.size()) + 20;
  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left << "\" y=\"18\">TASR (%) " << detail::svg_escape(m.attack) << "</text>\n";
  for (std::size_t v = 0; v < m.models.size(); ++v)
    out << "<text x=\"" << left + cell * v + cell / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
        << detail::svg_escape(m.models[v]) << "</text>\n";
  for (std::size_t row = 0; row < m.sources.size(); ++row) {
    const int y = top + cell * static_cast<int>(row);
    out << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << detail::svg_escape(m.models[m.sources[row]]) << "</text>\n";
    for (std::size_t v = 0; v < m.models.size(); ++v) {
      const double t = m.mean_tasr(row, v);
      const int shade = 255 - static_cast<int>(std::lround(200.0 * t));
      const int x = left + cell * static_cast<int>(v);
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
          << shade << ',' << shade << ",255)\" stroke=\"#444\"/>\n";
      out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
          << detail::fixed(100.0 * t) << (m.sources[row] == v ? "*" : "") << "</text>\n";
    }
  }
  out << "</svg>\n";
}

/// Line plot of the ablation score (and white-box TASR) against k.
inline void write_ablation_svg(const std::filesystem::path& path, const AblationSummary& a) {
  const int w = 420, h = 280, left = 50, right = 20, top = 30, bottom = 40;
  const int pw = w - left - right, ph = h - top - bottom;
  auto ks = a.rows;
  std::sort(ks.begin(), ks.end(), [](const AblationRow& x, const AblationRow& y) { return x.k < y.k; });
  const int kmin = ks.front().k, kmax = ks.back().k;
  auto px = [&](int k) { return left + (kmax == kmin ? pw / 2 : (k - kmin) * pw / (kmax - kmin)); };
  auto py = [&](double v) { return top + static_cast<int>(std::lround((1.0 - v) * ph)); };
  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left << "\" y=\"18\">TASR vs k (source " << detail::svg_escape(a.source) << ", argmax k="
      << a.argmax_k << ")</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i)
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(i / 4.0) + 4 << "\" text-anchor=\"end\">" << 25 * i << "</text>\n";
  for (const auto& r : ks)
    out << "<text x=\"" << px(r.k) << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"middle\">" << r.k << "</text>\n";
  auto line = [&](auto value, const char* colour) {
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : ks) out << px(r.k) << ',' << py(value(r)) << ' ';
    out << "\"/>\n";
  };
  line([](const AblationRow& r) { return r.score; }, "#c33");
  line([](const AblationRow& r) { return r.white_box_tasr; }, "#36c");
  out << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 << "\" fill=\"#c33\">score</text>\n";
  out << "<text x=\"" << left + 8 << "\" y=\"" << top + 28 << "\" fill=\"#36c\">white-box</text>\n";
  out << "</svg>\n";
}

}  // namespace lfaa
