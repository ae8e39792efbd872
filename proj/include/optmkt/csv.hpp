// Deterministic CSV emission. Every file starts with a comment header
// recording the tool version, a hash of the generating config, the seed (or
// "none" for quadrature runs), and the RNG identifier, so identical inputs
// produce byte-identical artifacts. Numbers are printed with 12 significant
// digits and '.' as the decimal separator regardless of locale.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "optmkt/common.hpp"
#include "optmkt/scenario.hpp"
#include "optmkt/version.hpp"

namespace optmkt {

/// FNV-1a (64-bit) of a byte string; used to fingerprint configs in output
/// metadata.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string format_number(double x) {
    if (x == 0.0) return "0";  // avoid the "-0" spelling
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

inline std::string format_hash(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct RunMetadata {
    std::uint64_t config_hash = 0;
    std::string seed = "none";  // decimal seed or "none" for quadrature runs

    void set_seed(std::uint64_t s) { seed = std::to_string(s); }
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const RunMetadata& meta) : out_(path) {
        if (!out_) throw ConfigError("csv: cannot open '" + path + "' for writing");
        out_ << "# tool_version: " << kToolVersion << "\n";
        out_ << "# config_hash: " << format_hash(meta.config_hash) << "\n";
        out_ << "# seed: " << meta.seed << "\n";
        out_ << "# rng: " << rng_identifier() << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i != 0) out_ << ',';
            out_ << quoted(cells[i]);
        }
        out_ << '\n';
    }

private:
    // Fields never contain separators in practice; quoting kept for safety.
    static std::string quoted(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
};

}  // namespace optmkt
