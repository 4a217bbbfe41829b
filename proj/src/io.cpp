#include "modred/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace modred::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "MRD1 encoding assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'R', 'D', '1'};

void append_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

std::uint64_t read_u64(std::string_view bytes, std::size_t offset) {
    std::uint64_t v = 0;
    std::memcpy(&v, bytes.data() + offset, 8);
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("cannot parse number '" + std::string(s) + "'");
    return v;
}

}  // namespace

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string encode_mrd1(const DenseMatrix& M) {
    std::string out;
    out.reserve(20 + 8 * static_cast<std::size_t>(M.size()));
    out.append(kMagic, 4);
    append_u64(out, static_cast<std::uint64_t>(M.rows()));
    append_u64(out, static_cast<std::uint64_t>(M.cols()));
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) {
            const double v = M(i, j);
            char buf[8];
            std::memcpy(buf, &v, 8);
            out.append(buf, 8);
        }
    return out;
}

DenseMatrix decode_mrd1(std::string_view bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("not an MRD1 matrix (bad magic)");
    const std::uint64_t rows = read_u64(bytes, 4);
    const std::uint64_t cols = read_u64(bytes, 12);
    if (cols != 0 && rows > (bytes.size() / 8) / cols + 1)
        throw std::runtime_error("MRD1 payload truncated");
    if (bytes.size() != 20 + 8 * rows * cols) throw std::runtime_error("MRD1 payload size mismatch");
    DenseMatrix M(static_cast<Index>(rows), static_cast<Index>(cols));
    std::size_t offset = 20;
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) {
            double v = 0.0;
            std::memcpy(&v, bytes.data() + offset, 8);
            offset += 8;
            M(i, j) = v;
        }
    return M;
}

void write_mrd1(const fs::path& path, const DenseMatrix& M) { atomic_write(path, encode_mrd1(M)); }

DenseMatrix read_mrd1(const fs::path& path) { return decode_mrd1(read_file(path)); }

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

std::string encode_matrix_text(const DenseMatrix& M) {
    std::string out;
    for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) {
            if (j) out.push_back(',');
            out += format_double(M(i, j));
        }
        out.push_back('\n');
    }
    return out;
}

DenseMatrix decode_matrix_text(std::string_view text) {
    std::vector<std::vector<double>> rows;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        line = trim(line);
        if (line.empty()) continue;
        std::vector<double> row;
        while (true) {
            const auto comma = line.find(',');
            row.push_back(parse_double(line.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            line = line.substr(comma + 1);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("matrix text: ragged rows");
        rows.push_back(std::move(row));
    }
    const Index r = static_cast<Index>(rows.size());
    const Index c = r ? static_cast<Index>(rows.front().size()) : 0;
    DenseMatrix M(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) M(i, j) = rows[i][j];
    return M;
}

void Header::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos)
        throw std::invalid_argument("Header: invalid key '" + key + "'");
    if (value.find('\n') != std::string::npos)
        throw std::invalid_argument("Header: value for '" + key + "' contains a newline");
    entries_[key] = value;
}

void Header::set(const std::string& key, double value) { set(key, format_double(value)); }

void Header::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool Header::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string& Header::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw std::runtime_error("header key '" + key + "' missing");
    return it->second;
}

double Header::get_double(const std::string& key) const { return parse_double(get(key)); }

long long Header::get_int(const std::string& key) const {
    const std::string& s = get(key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("header key '" + key + "' is not an integer");
    return v;
}

std::string Header::encode() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

Header Header::decode(std::string_view text) {
    Header h;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw std::runtime_error("header line without '=': " + std::string(line));
        h.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return h;
}

void Header::write(const fs::path& path) const { atomic_write(path, encode()); }

Header Header::read(const fs::path& path) { return decode(read_file(path)); }

namespace {
// Accepts "x", "x.mrd1" or "x.hdr" for the same bundle.
fs::path with_suffix(const fs::path& stem, const char* suffix) {
    fs::path p = stem;
    if (p.extension() == ".mrd1" || p.extension() == ".hdr") p.replace_extension();
    p += suffix;
    return p;
}
}  // namespace

void write_matrix_bundle(const fs::path& stem, const DenseMatrix& M, const Header& header) {
    Header h = header;
    h.set("rows", static_cast<long long>(M.rows()));
    h.set("cols", static_cast<long long>(M.cols()));
    write_mrd1(with_suffix(stem, ".mrd1"), M);
    h.write(with_suffix(stem, ".hdr"));
}

std::pair<DenseMatrix, Header> read_matrix_bundle(const fs::path& stem) {
    DenseMatrix M = read_mrd1(with_suffix(stem, ".mrd1"));
    Header h = Header::read(with_suffix(stem, ".hdr"));
    if (h.has("rows") && (h.get_int("rows") != M.rows() || h.get_int("cols") != M.cols()))
        throw std::runtime_error("bundle " + stem.string() + ": header dimensions disagree with payload");
    return {std::move(M), std::move(h)};
}

PgmScaling min_max_scaling(const DenseMatrix& image) {
    if (image.size() == 0) return {};
    return {image.minCoeff(), image.maxCoeff()};
}

std::string encode_pgm(const DenseMatrix& image, const PgmScaling& scaling) {
    std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
    const double span = scaling.hi - scaling.lo;
    for (Index i = 0; i < image.rows(); ++i)
        for (Index j = 0; j < image.cols(); ++j) {
            double t = span > 0.0 ? (image(i, j) - scaling.lo) / span : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
        }
    return out;
}

void write_pgm(const fs::path& path, const DenseMatrix& image, const PgmScaling& scaling) {
    atomic_write(path, encode_pgm(image, scaling));
}

}  // namespace modred::io
