#include "memrecall/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "memrecall/errors.hpp"

namespace memrecall::report {

namespace fs = std::filesystem;

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt(float v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(std::string_view f) {
    if (f.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(f);
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), width_(header.size()) {
    if (!out_) throw DataError("cannot write " + path.string());
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw std::logic_error("CSV row width mismatch in " + path_.string());
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << csv_escape(fields[i]);
    }
    out_ << '\n';
}

void CsvWriter::close() {
    out_.close();
    if (!out_) throw DataError("write failed: " + path_.string());
}

std::size_t CsvTable::column(std::string_view name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("CSV is missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw DataError(path.string() + ": unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path.string() + ": missing CSV header");
    CsvTable t;
    t.header = std::move(rows.front());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != t.header.size())
            throw DataError(path.string() + ": row " + std::to_string(r + 1) + " has " +
                            std::to_string(rows[r].size()) + " fields, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(rows[r]));
    }
    return t;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 init failed");
    }
    std::vector<char> buf(1 << 20);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// SVG

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

std::string tick_label(double v) {
    std::ostringstream os;
    if (v != 0.0 && (std::fabs(v) >= 1e4 || std::fabs(v) < 1e-2))
        os << std::setprecision(2) << std::scientific << v;
    else
        os << std::setprecision(3) << v;
    return os.str();
}

constexpr double kPanelW = 420, kPanelH = 300, kLeft = 60, kRight = 110, kTop = 30, kBottom = 45;

std::string comment(const std::string& note) {
    if (note.empty()) return {};
    std::string safe = note;
    for (std::size_t p; (p = safe.find("--")) != std::string::npos;) safe.replace(p, 2, "- -");
    return "<!-- " + safe + " -->\n";
}

std::string render_panel(const LinePlotSpec& spec, const std::vector<Series>& series, double ox, double oy) {
    std::ostringstream os;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto ty = [&](double y) { return spec.log_y ? std::log10(y + 1.0) : y; };  // log axis over value + 1
    for (const auto& s : series)
        for (double y : s.y) {
            ymin = std::min(ymin, ty(y));
            ymax = std::max(ymax, ty(y));
        }
    for (const auto& s : series)
        for (double x : s.x) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
    if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
    if (!spec.log_y) ymin = std::min(ymin, 0.0);
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    const double pw = kPanelW - kLeft - kRight, ph = kPanelH - kTop - kBottom;
    auto px = [&](double x) { return ox + kLeft + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double yv) { return oy + kTop + ph - (yv - ymin) / (ymax - ymin) * ph; };

    os << "<g>\n";
    os << "<text x=\"" << num(ox + kPanelW / 2) << "\" y=\"" << num(oy + 18)
       << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(spec.title) << "</text>\n";
    os << "<rect x=\"" << num(ox + kLeft) << "\" y=\"" << num(oy + kTop) << "\" width=\"" << num(pw)
       << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        const double label = spec.log_y ? std::pow(10.0, yv) - 1.0 : yv;
        os << "<text x=\"" << num(ox + kLeft - 4) << "\" y=\"" << num(py(yv) + 4)
           << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(label) << "</text>\n";
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        os << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(oy + kTop + ph + 14)
           << "\" text-anchor=\"middle\" font-size=\"10\">" << tick_label(std::round(xv * 10) / 10) << "</text>\n";
    }
    os << "<text x=\"" << num(ox + kLeft + pw / 2) << "\" y=\"" << num(oy + kPanelH - 8)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(spec.x_label) << "</text>\n";
    os << "<text transform=\"translate(" << num(ox + 14) << "," << num(oy + kTop + ph / 2)
       << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(spec.y_label)
       << (spec.log_y ? " (log scale)" : "") << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            const double yv = ty(series[s].y[i]);
            os << (i ? " " : "") << num(px(series[s].x[i])) << "," << num(py(yv));
        }
        os << "\"/>\n";
        const double ly = oy + kTop + 12 + 16.0 * static_cast<double>(s);
        os << "<line x1=\"" << num(ox + kLeft + pw + 8) << "\" y1=\"" << num(ly) << "\" x2=\""
           << num(ox + kLeft + pw + 26) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(ox + kLeft + pw + 30) << "\" y=\"" << num(ly + 4) << "\" font-size=\"11\">"
           << xml_escape(series[s].label) << "</text>\n";
    }
    os << "</g>\n";
    return os.str();
}

}  // namespace

std::string svg_line_plot(const LinePlotSpec& spec, const std::vector<Series>& series, const std::string& note) {
    return svg_panels({{spec, series}}, note);
}

std::string svg_panels(const std::vector<std::pair<LinePlotSpec, std::vector<Series>>>& panels,
                       const std::string& note) {
    std::ostringstream os;
    const double w = kPanelW * static_cast<double>(std::max<std::size_t>(1, panels.size()));
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(kPanelH)
       << "\" font-family=\"sans-serif\">\n"
       << comment(note) << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i)
        os << render_panel(panels[i].first, panels[i].second, kPanelW * static_cast<double>(i), 0.0);
    os << "</svg>\n";
    return os.str();
}

std::string svg_heatmap(const std::string& title, std::size_t n_layers, const std::vector<HeatmapCell>& cells,
                        const std::string& value_label, const std::string& note) {
    const double cell = n_layers > 30 ? 12.0 : 18.0;
    const double left = 60, top = 40, legend = 140;
    const double grid = cell * static_cast<double>(n_layers);
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (const auto& c : cells) {
        vmin = std::min(vmin, c.value);
        vmax = std::max(vmax, c.value);
    }
    if (!std::isfinite(vmin)) vmin = 0, vmax = 1;
    if (vmax == vmin) vmax = vmin + 1;
    auto color = [&](double v) {
        const double t = std::clamp((v - vmin) / (vmax - vmin), 0.0, 1.0);
        const int r = static_cast<int>(std::lround(255 - t * (255 - 8)));
        const int g = static_cast<int>(std::lround(255 - t * (255 - 48)));
        const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
        std::ostringstream os;
        os << "rgb(" << r << "," << g << "," << b << ")";
        return os.str();
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(left + grid + legend) << "\" height=\""
       << num(top + grid + 50) << "\" font-family=\"sans-serif\">\n"
       << comment(note) << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(left + grid / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
       << xml_escape(title) << "</text>\n";
    for (const auto& c : cells) {
        const double x = left + cell * static_cast<double>(c.col - 1);
        const double y = top + cell * static_cast<double>(c.row - 1);
        os << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell) << "\" height=\""
           << num(cell) << "\" fill=\"" << color(c.value) << "\"><title>start " << c.row << ", end " << c.col
           << ": " << fmt(c.value) << "</title></rect>\n";
    }
    for (std::size_t l = 1; l <= n_layers; ++l) {
        if (n_layers > 12 && l % 2 == 0 && l != n_layers) continue;
        const double off = cell * (static_cast<double>(l) - 0.5);
        os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + off + 4)
           << "\" text-anchor=\"end\" font-size=\"9\">" << l << "</text>\n";
        os << "<text x=\"" << num(left + off) << "\" y=\"" << num(top + grid + 12)
           << "\" text-anchor=\"middle\" font-size=\"9\">" << l << "</text>\n";
    }
    os << "<text x=\"" << num(left + grid / 2) << "\" y=\"" << num(top + grid + 30)
       << "\" text-anchor=\"middle\" font-size=\"11\">end layer</text>\n";
    os << "<text transform=\"translate(16," << num(top + grid / 2)
       << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">start layer</text>\n";
    const double lx = left + grid + 20;
    for (int i = 0; i <= 10; ++i) {
        const double v = vmax - (vmax - vmin) * i / 10.0;
        os << "<rect x=\"" << num(lx) << "\" y=\"" << num(top + 14.0 * i) << "\" width=\"14\" height=\"14\" fill=\""
           << color(v) << "\"/>\n";
        if (i % 5 == 0)
            os << "<text x=\"" << num(lx + 18) << "\" y=\"" << num(top + 14.0 * i + 11) << "\" font-size=\"10\">"
               << tick_label(v) << "</text>\n";
    }
    os << "<text x=\"" << num(lx) << "\" y=\"" << num(top + 14.0 * 11 + 16) << "\" font-size=\"10\">"
       << xml_escape(value_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Manifest / outputs

std::string RunManifest::id() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["model"] = model;
    j["dataset_hashes"] = dataset_hashes;
    j["seed"] = seed;
    j["tool_version"] = tool_version;
    return sha256_hex(j.dump()).substr(0, 16);
}

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["manifest_id"] = id();
    j["command"] = command;
    j["config"] = config;
    j["model"] = model;
    j["dataset_hashes"] = dataset_hashes;
    j["seed"] = seed;
    j["timestamp"] = timestamp;
    j["tool_version"] = tool_version;
    j["outputs"] = outputs;
    return j;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

OutputSet::OutputSet(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_)) {
        fs::create_directories(dir_);
        created_dir_ = true;
    }
}

OutputSet::~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
}

fs::path OutputSet::add(const std::string& name) {
    auto p = dir_ / name;
    files_.push_back(p);
    return p;
}

void finalize_outputs(OutputSet& outputs, RunManifest& manifest) {
    for (const auto& f : outputs.files())
        if (fs::exists(f)) manifest.outputs[f.filename().string()] = sha256_file(f);
    const auto path = outputs.add("manifest.json");
    write_text(path, manifest.to_json().dump(2) + "\n");
    outputs.commit();
}

}  // namespace memrecall::report
