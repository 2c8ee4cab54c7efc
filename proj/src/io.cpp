#include "pf/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include "pf/errors.hpp"

namespace pf {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) throw IoError("cannot parse double: '" + s + "'");
    return v;
}

static_assert(std::endian::native == std::endian::little,
              "blob format assumes a little-endian host");

void write_f64_blob(const std::filesystem::path& path, const std::vector<double>& data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<double> read_f64_blob(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    const auto bytes = static_cast<std::size_t>(f.tellg());
    if (bytes % sizeof(double) != 0)
        throw IoError("blob size not a multiple of 8: " + path.string());
    std::vector<double> data(bytes / sizeof(double));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("read failed: " + path.string());
    return data;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::string s(static_cast<std::size_t>(f.tellg()), '\0');
    f.seekg(0);
    f.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!f) throw IoError("read failed: " + path.string());
    return s;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf, 16);
}

std::string file_checksum(const std::filesystem::path& path) {
    return fnv1a_hex(read_text(path));
}

}  // namespace pf
