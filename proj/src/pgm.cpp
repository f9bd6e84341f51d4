#include "cgen/pgm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "cgen/errors.hpp"

namespace cgen::io {

using ad::Tensor;

void write_pgm(const std::string& path, const Tensor<float>& img) {
    std::size_t h = 0, w = 0;
    if (img.rank() == 2) {
        h = img.dim(0), w = img.dim(1);
    } else if (img.rank() == 3 && img.dim(0) == 1) {
        h = img.dim(1), w = img.dim(2);
    } else {
        throw DimensionError("write_pgm expects [H,W] or [1,H,W], got " +
                             ad::shape_str(img.shape()));
    }

    std::string bytes;
    bytes.reserve(h * w);
    for (float v : img.data()) {
        const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        bytes.push_back(static_cast<char>(std::lround(c * 255.0f)));
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("short write to '" + path + "'");
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comment lines.
std::string next_token(std::istream& is) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

std::size_t header_count(std::istream& is, const std::string& path, const std::string& what) {
    const std::string tok = next_token(is);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        throw FormatError("pgm '" + path + "': bad " + what + " '" + tok + "'");
    }
    return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace

Tensor<float> read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");

    if (next_token(is) != "P5") throw FormatError("pgm '" + path + "': not a P5 file");
    const std::size_t w = header_count(is, path, "width");
    const std::size_t h = header_count(is, path, "height");
    const std::size_t maxval = header_count(is, path, "maxval");
    if (maxval != 255) {
        throw FormatError("pgm '" + path + "': maxval " + std::to_string(maxval) +
                          ", only 255 is supported");
    }
    if (h == 0 || w == 0) throw FormatError("pgm '" + path + "': empty image");

    // exactly one whitespace byte separates the header from the payload
    std::string bytes(h * w, '\0');
    is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
        throw FormatError("pgm '" + path + "': truncated pixel data");
    }

    auto img = Tensor<float>::zeros({1, h, w});
    auto dst = img.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
    }
    return img;
}

}  // namespace cgen::io
