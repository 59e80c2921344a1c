#pragma once

// Deterministic artifact emission: RFC-4180 CSV, a minimal SVG polyline
// plotter, canonical JSON text, and atomic file writes.  Everything here is a
// pure function of its inputs so repeated runs produce byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "viana/errors.hpp"

namespace viana {

// shortest round-trip decimal form of a double, stable across runs
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ----------------------------- CSV ----------------------------------------

// RFC-4180: fields holding comma, quote, CR or LF are quoted with doubled
// quotes; rows end in LF; text is UTF-8 passthrough.
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

class csv_writer {
public:
    csv_writer& field(const std::string& s) {
        if (!at_row_start_) out_ += ',';
        out_ += csv_escape(s);
        at_row_start_ = false;
        return *this;
    }
    csv_writer& field(const char* s) { return field(std::string(s)); }
    csv_writer& field(double v) { return field(format_double(v)); }
    template <typename T, std::enable_if_t<std::is_integral_v<T>, int> = 0>
    csv_writer& field(T v) {
        if constexpr (std::is_signed_v<T>)
            return field(std::to_string(static_cast<long long>(v)));
        else
            return field(std::to_string(static_cast<unsigned long long>(v)));
    }

    void end_row() {
        out_ += '\n';
        at_row_start_ = true;
    }

    void header(std::initializer_list<const char*> names) {
        for (const char* n : names) field(n);
        end_row();
    }

    const std::string& text() const {
        if (!at_row_start_) fail(errc::io_error, "CSV row left unterminated");
        return out_;
    }

private:
    std::string out_;
    bool at_row_start_ = true;
};

// ----------------------------- SVG ----------------------------------------

// Minimal deterministic plot: polyline series over automatic linear axes with
// a handful of ticks.  Callers pre-transform data (e.g. take logs) themselves.
class svg_plot {
public:
    svg_plot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
        if (xs.size() != ys.size() || xs.empty())
            fail(errc::invalid_parameter, "plot series needs matching non-empty x/y");
        series_.push_back({std::move(name), std::move(xs), std::move(ys)});
    }

    std::string render() const {
        if (series_.empty()) fail(errc::invalid_parameter, "plot has no series");
        double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
        double y_lo = x_lo, y_hi = -x_lo;
        for (const auto& s : series_) {
            for (double v : s.xs) { x_lo = std::min(x_lo, v); x_hi = std::max(x_hi, v); }
            for (double v : s.ys) { y_lo = std::min(y_lo, v); y_hi = std::max(y_hi, v); }
        }
        if (!(x_hi >= x_lo) || !(y_hi >= y_lo))
            fail(errc::invalid_parameter, "plot data is not finite");
        if (x_hi == x_lo) { x_lo -= 0.5; x_hi += 0.5; }
        if (y_hi == y_lo) { y_lo -= 0.5; y_hi += 0.5; }

        const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
        auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (w - ml - mr); };
        auto py = [&](double y) { return h - mb - (y - y_lo) / (y_hi - y_lo) * (h - mt - mb); };
        static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                       "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

        std::string s;
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
             "viewBox=\"0 0 640 420\">\n";
        s += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
        s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" "
             "font-size=\"14\">" + escape_text(title_) + "</text>\n";
        // axes
        s += axis_line(ml, h - mb, w - mr, h - mb);
        s += axis_line(ml, mt, ml, h - mb);
        for (int t = 0; t <= 4; ++t) {
            const double fx = x_lo + (x_hi - x_lo) * t / 4.0;
            const double fy = y_lo + (y_hi - y_lo) * t / 4.0;
            s += tick_text(px(fx), h - mb + 18, "middle", format_tick(fx));
            s += tick_text(ml - 8, py(fy) + 4, "end", format_tick(fy));
            s += axis_line(px(fx), h - mb, px(fx), h - mb + 4);
            s += axis_line(ml - 4, py(fy), ml, py(fy));
        }
        s += tick_text(ml + (w - ml - mr) / 2, h - 12, "middle", escape_text(x_label_));
        s += "<text x=\"16\" y=\"" + format_double(mt + (h - mt - mb) / 2) +
             "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" "
             "transform=\"rotate(-90 16 " + format_double(mt + (h - mt - mb) / 2) + ")\">" +
             escape_text(y_label_) + "</text>\n";
        // series
        for (std::size_t i = 0; i < series_.size(); ++i) {
            const auto& sr = series_[i];
            s += "<polyline fill=\"none\" stroke=\"";
            s += colors[i % 8];
            s += "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < sr.xs.size(); ++k) {
                if (k) s += ' ';
                s += format_tick(px(sr.xs[k])) + "," + format_tick(py(sr.ys[k]));
            }
            s += "\"/>\n";
            s += "<text x=\"" + format_double(w - mr - 4) + "\" y=\"" +
                 format_double(mt + 16.0 * static_cast<double>(i + 1)) +
                 "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\" fill=\"";
            s += colors[i % 8];
            s += "\">" + escape_text(sr.name) + "</text>\n";
        }
        s += "</svg>\n";
        return s;
    }

private:
    struct series {
        std::string name;
        std::vector<double> xs, ys;
    };

    static std::string escape_text(const std::string& t) {
        std::string out;
        for (char c : t) {
            if (c == '&') out += "&amp;";
            else if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else out += c;
        }
        return out;
    }

    static std::string format_tick(double v) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return buf;
    }

    static std::string axis_line(double x1, double y1, double x2, double y2) {
        return "<line x1=\"" + format_tick(x1) + "\" y1=\"" + format_tick(y1) + "\" x2=\"" +
               format_tick(x2) + "\" y2=\"" + format_tick(y2) +
               "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    }

    static std::string tick_text(double x, double y, const char* anchor, const std::string& t) {
        return "<text x=\"" + format_tick(x) + "\" y=\"" + format_tick(y) + "\" text-anchor=\"" +
               anchor + "\" font-family=\"monospace\" font-size=\"12\">" + t + "</text>\n";
    }

    std::string title_, x_label_, y_label_;
    std::vector<series> series_;
};

// ----------------------------- files --------------------------------------

// canonical JSON text: sorted keys (nlohmann object order), two-space indent,
// trailing newline
inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) fail(errc::io_error, "cannot open " + tmp.string() + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os) fail(errc::io_error, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(errc::io_error, "cannot move " + tmp.string() + " into place: " + ec.message());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(errc::io_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    if (!is && !is.eof()) fail(errc::io_error, "cannot read " + path.string());
    return ss.str();
}

// FNV-1a, the config fingerprint recorded in manifests
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace viana
