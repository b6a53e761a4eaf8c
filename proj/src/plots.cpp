#include "cadx/plots.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "cadx/common.hpp"

namespace cadx {

std::string format_number(double v) {
  if (!std::isfinite(v)) throw NumericError("cannot format a non-finite number");
  if (v == 0.0) return "0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericError("number formatting failed");
  return std::string(buf, end);
}

namespace {

/// Fixed-point coordinates keep the SVG text short and stable.
std::string fixed(double v, int digits = 2) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  if (ec != std::errc()) throw NumericError("number formatting failed");
  std::string s(buf, end);
  if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
  return s;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void check_labels(const eval::ConfusionMatrix& m, std::span<const std::string_view> labels) {
  if (labels.size() != static_cast<std::size_t>(m.classes)) throw DataError("one label per class required");
}

constexpr const char* kSvgHeader = R"(<?xml version="1.0" encoding="UTF-8"?>
)";

}  // namespace

std::string roc_csv(const eval::RocCurve& roc) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : roc.points)
    out += format_number(p.threshold) + "," + format_number(p.fpr) + "," + format_number(p.tpr) + "\n";
  return out;
}

std::string confusion_csv(const eval::ConfusionMatrix& m, std::span<const std::string_view> labels) {
  check_labels(m, labels);
  std::string header = "actual\\predicted";
  for (auto l : labels) header += "," + std::string(l);
  header += "\n";
  std::string out = header;
  for (int i = 0; i < m.classes; ++i) {
    out += std::string(labels[static_cast<std::size_t>(i)]);
    for (int j = 0; j < m.classes; ++j) out += "," + std::to_string(m.at(i, j));
    out += "\n";
  }
  out += "\n" + header;
  const auto norm = m.normalized();
  for (int i = 0; i < m.classes; ++i) {
    out += std::string(labels[static_cast<std::size_t>(i)]);
    for (int j = 0; j < m.classes; ++j)
      out += "," + format_number(norm[static_cast<std::size_t>(i) * m.classes + j]);
    out += "\n";
  }
  return out;
}

std::string roc_svg(const eval::RocCurve& roc, std::string_view title) {
  const double left = 60, top = 40, size = 320;
  const auto px = [&](double fpr) { return fixed(left + fpr * size); };
  const auto py = [&](double tpr) { return fixed(top + (1.0 - tpr) * size); };
  std::ostringstream s;
  s << kSvgHeader;
  s << R"(<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="420" height="420" viewBox="0 0 420 420">)"
    << "\n";
  s << R"(<rect x="0" y="0" width="420" height="420" fill="white"/>)" << "\n";
  s << R"(<text x="210" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">)" << escape(title)
    << " (AUC " << fixed(roc.auc, 3) << ")</text>\n";
  s << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(size) << "\" height=\""
    << fixed(size) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    s << "<text x=\"" << px(v) << "\" y=\"" << fixed(top + size + 16)
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << fixed(v) << "</text>\n";
    s << "<text x=\"" << fixed(left - 6) << "\" y=\"" << py(v)
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << fixed(v) << "</text>\n";
  }
  s << "<text x=\"" << fixed(left + size / 2) << "\" y=\"" << fixed(top + size + 34)
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">false positive rate</text>\n";
  s << "<text x=\"16\" y=\"" << fixed(top + size / 2) << "\" font-family=\"sans-serif\" font-size=\"12\" "
    << "text-anchor=\"middle\" transform=\"rotate(-90 16 " << fixed(top + size / 2) << ")\">true positive rate</text>\n";
  s << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
    << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  s << "<polyline fill=\"none\" stroke=\"#1f4e9a\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < roc.points.size(); ++i) {
    if (i) s << ' ';
    s << px(roc.points[i].fpr) << ',' << py(roc.points[i].tpr);
  }
  s << "\"/>\n</svg>\n";
  return s.str();
}

std::string confusion_svg(const eval::ConfusionMatrix& m, std::span<const std::string_view> labels,
                          std::string_view title) {
  check_labels(m, labels);
  const double cell = 64, left = 110, top = 60;
  const double width = left + cell * m.classes + 20;
  const double height = top + cell * m.classes + 50;
  const auto norm = m.normalized();
  std::ostringstream s;
  s << kSvgHeader;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fixed(width, 0) << "\" height=\""
    << fixed(height, 0) << "\" viewBox=\"0 0 " << fixed(width, 0) << ' ' << fixed(height, 0) << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
    << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << fixed(width / 2) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" "
    << "text-anchor=\"middle\">" << escape(title) << "</text>\n";
  for (int i = 0; i < m.classes; ++i) {
    for (int j = 0; j < m.classes; ++j) {
      const double v = norm[static_cast<std::size_t>(i) * m.classes + j];
      // White to dark blue.
      const int r = static_cast<int>(std::lround(255 - v * (255 - 31)));
      const int g = static_cast<int>(std::lround(255 - v * (255 - 78)));
      const int b = static_cast<int>(std::lround(255 - v * (255 - 154)));
      const double x = left + j * cell, y = top + i * cell;
      s << "<rect x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" width=\"" << fixed(cell) << "\" height=\""
        << fixed(cell) << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\" stroke=\"black\"/>\n";
      s << "<text x=\"" << fixed(x + cell / 2) << "\" y=\"" << fixed(y + cell / 2 + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" fill=\""
        << (v > 0.5 ? "white" : "black") << "\">" << fixed(v) << " (" << m.at(i, j) << ")</text>\n";
    }
    s << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(top + i * cell + cell / 2 + 4)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
      << escape(labels[static_cast<std::size_t>(i)]) << "</text>\n";
    s << "<text x=\"" << fixed(left + i * cell + cell / 2) << "\" y=\"" << fixed(top + m.classes * cell + 16)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
      << escape(labels[static_cast<std::size_t>(i)]) << "</text>\n";
  }
  s << "<text x=\"" << fixed(left + m.classes * cell / 2) << "\" y=\"" << fixed(top + m.classes * cell + 36)
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">predicted</text>\n";
  s << "<text x=\"14\" y=\"" << fixed(top - 12) << "\" font-family=\"sans-serif\" font-size=\"12\">actual</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace cadx
