#pragma once

#include "modred/numkit.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace modred::io {

namespace fs = std::filesystem;

/// Writes bytes to a sibling temp file, then renames it over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);

// "MRD1" | u64 rows | u64 cols | rows*cols f64, all little-endian, row-major.
std::string encode_mrd1(const DenseMatrix& M);
DenseMatrix decode_mrd1(std::string_view bytes);
void write_mrd1(const fs::path& path, const DenseMatrix& M);
DenseMatrix read_mrd1(const fs::path& path);

/// Comma-separated rows, one per line, shortest round-trip decimal form.
std::string encode_matrix_text(const DenseMatrix& M);
DenseMatrix decode_matrix_text(std::string_view text);

/// key=value sidecar. Keys are kept sorted so output is reproducible.
class Header {
public:
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long long value);
    void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }
    void set(const std::string& key, std::size_t value) { set(key, static_cast<long long>(value)); }

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

    std::string encode() const;
    static Header decode(std::string_view text);

    void write(const fs::path& path) const;
    static Header read(const fs::path& path);

private:
    std::map<std::string, std::string> entries_;
};

/// Matrix payload at `<stem>.mrd1` plus header at `<stem>.hdr`. A trailing
/// .mrd1 or .hdr on `stem` is ignored.
void write_matrix_bundle(const fs::path& stem, const DenseMatrix& M, const Header& header);
std::pair<DenseMatrix, Header> read_matrix_bundle(const fs::path& stem);

/// Shortest decimal that round-trips a double.
std::string format_double(double v);

struct PgmScaling {
    double lo = 0.0;
    double hi = 1.0;
};

/// Binary 8-bit PGM ("P5", maxval 255); values mapped linearly from
/// [lo, hi] onto [0, 255] and clamped. `image` is row-major rows x cols.
std::string encode_pgm(const DenseMatrix& image, const PgmScaling& scaling);
void write_pgm(const fs::path& path, const DenseMatrix& image, const PgmScaling& scaling);
PgmScaling min_max_scaling(const DenseMatrix& image);

std::string read_file(const fs::path& path);

}  // namespace modred::io
