#include "cgen/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "cgen/errors.hpp"

namespace cgen::nn {

using ad::Shape;
using ad::shape_numel;
using ad::shape_str;

namespace {

constexpr char kMagic[4] = {'C', 'G', 'E', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
    return v;
}

std::string shape_token(const Shape& shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(shape[i]);
    }
    return out;
}

Shape parse_shape_token(const std::string& tok, const std::string& context) {
    Shape shape;
    std::size_t start = 0;
    while (start <= tok.size()) {
        const std::size_t pos = tok.find('x', start);
        const std::string part = tok.substr(start, pos - start);
        if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
            throw FormatError("checkpoint header: bad shape '" + tok + "' in " + context);
        }
        shape.push_back(static_cast<std::size_t>(std::stoull(part)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return shape;
}

std::string build_header(const CheckpointData& data) {
    std::ostringstream os;
    os << "[model]\n";
    os << "kind = " << data.kind << "\n";
    for (const auto& [k, v] : data.meta) os << k << " = " << v << "\n";
    os << "[specs]\n";
    for (const auto& [k, v] : data.specs) os << k << " = " << v << "\n";
    os << "[tensors]\n";
    std::uint64_t offset = 0;
    for (const auto& nt : data.tensors) {
        os << nt.name << " = " << shape_token(nt.tensor.shape()) << " @ " << offset << "\n";
        offset += nt.tensor.numel() * sizeof(float);
    }
    return os.str();
}

struct TensorEntry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
};

struct Header {
    CheckpointData data;  // tensors left empty
    std::vector<TensorEntry> entries;
};

Header parse_header(const std::string& text) {
    Header h;
    std::string section;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw FormatError("checkpoint header: bad section '" + line + "'");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw FormatError("checkpoint header: bad line '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 3);
        if (section == "model") {
            if (key == "kind") h.data.kind = value;
            else h.data.meta.emplace_back(key, value);
        } else if (section == "specs") {
            h.data.specs.emplace_back(key, value);
        } else if (section == "tensors") {
            const std::size_t at = value.find(" @ ");
            if (at == std::string::npos) {
                throw FormatError("checkpoint header: bad tensor line '" + line + "'");
            }
            TensorEntry e;
            e.name = key;
            e.shape = parse_shape_token(value.substr(0, at), "tensor " + key);
            const std::string off = value.substr(at + 3);
            if (off.empty() || off.find_first_not_of("0123456789") != std::string::npos) {
                throw FormatError("checkpoint header: bad offset in '" + line + "'");
            }
            e.offset = std::stoull(off);
            h.entries.push_back(std::move(e));
        } else {
            throw FormatError("checkpoint header: line outside a known section: '" + line + "'");
        }
    }
    if (h.data.kind.empty()) throw FormatError("checkpoint header: missing model kind");
    return h;
}

std::string meta_value(const CheckpointData& data, const std::string& key) {
    for (const auto& [k, v] : data.meta)
        if (k == key) return v;
    throw FormatError("checkpoint header: missing model key '" + key + "'");
}

std::size_t meta_count(const CheckpointData& data, const std::string& key) {
    const std::string v = meta_value(data, key);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw FormatError("checkpoint header: bad value for '" + key + "': '" + v + "'");
    }
    return static_cast<std::size_t>(std::stoull(v));
}

std::string spec_value(const CheckpointData& data, const std::string& key) {
    for (const auto& [k, v] : data.specs)
        if (k == key) return v;
    throw FormatError("checkpoint header: missing layer specs for '" + key + "'");
}

std::vector<LayerSpec> parse_spec_list(const std::string& joined) {
    std::vector<LayerSpec> specs;
    std::size_t start = 0;
    while (start <= joined.size()) {
        const std::size_t pos = joined.find('|', start);
        specs.push_back(LayerSpec::parse(joined.substr(start, pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return specs;
}

std::string join_specs(const std::vector<LayerSpec>& specs) {
    std::string out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) out += '|';
        out += specs[i].str();
    }
    return out;
}

// Copies file tensors into the freshly rebuilt model parameters, matching
// name and shape pairwise in payload order.
void fill_parameters(const std::vector<Tensor<float>>& params,
                     const std::vector<NamedTensor>& tensors, const std::string& path) {
    if (params.size() != tensors.size()) {
        throw FormatError("checkpoint '" + path + "': holds " + std::to_string(tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name() != tensors[i].name ||
            !ad::same_shape(params[i].shape(), tensors[i].tensor.shape())) {
            throw FormatError("checkpoint '" + path + "': tensor " + std::to_string(i) + " is '" +
                              tensors[i].name + "' " + shape_str(tensors[i].tensor.shape()) +
                              ", model expects '" + params[i].name() + "' " +
                              shape_str(params[i].shape()));
        }
        auto dst = params[i].data();
        auto src = tensors[i].tensor.data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
    }
}

}  // namespace

void write_checkpoint(const CheckpointData& data, const std::string& path) {
    const std::string header = build_header(data);
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, header.size());
    out += header;
    for (const auto& nt : data.tensors) {
        for (float v : nt.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("short write to '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

    if (bytes.size() < 16) throw FormatError("checkpoint '" + path + "': truncated preamble");
    if (std::string(bytes.data(), 4) != std::string(kMagic, 4)) {
        throw FormatError("checkpoint '" + path + "': bad magic bytes");
    }
    const std::uint32_t version = get_u32(p + 4);
    if (version != kVersion) {
        throw VersionError("checkpoint '" + path + "': unsupported version " +
                           std::to_string(version));
    }
    const std::uint64_t header_len = get_u64(p + 8);
    if (16 + header_len > bytes.size()) {
        throw FormatError("checkpoint '" + path + "': truncated header");
    }
    Header h = parse_header(bytes.substr(16, header_len));

    const std::size_t payload_begin = 16 + header_len;
    const std::uint64_t payload_len = bytes.size() - payload_begin;
    std::uint64_t expected = 0;
    for (const auto& e : h.entries) {
        if (e.offset != expected) {
            throw FormatError("checkpoint '" + path + "': tensor '" + e.name +
                              "' offset " + std::to_string(e.offset) + " is not contiguous");
        }
        expected += shape_numel(e.shape) * sizeof(float);
    }
    if (expected != payload_len) {
        throw FormatError("checkpoint '" + path + "': payload length " +
                          std::to_string(payload_len) + " does not match tensor total " +
                          std::to_string(expected));
    }

    for (const auto& e : h.entries) {
        auto t = Tensor<float>::zeros(e.shape);
        auto dst = t.data();
        const unsigned char* src = p + payload_begin + e.offset;
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] = std::bit_cast<float>(get_u32(src + 4 * j));
        }
        t.set_name(e.name);
        h.data.tensors.push_back({e.name, std::move(t)});
    }
    return h.data;
}

std::string checkpoint_kind(const std::string& path) { return read_checkpoint(path).kind; }

namespace {

std::vector<NamedTensor> named_parameters(const std::vector<Tensor<float>>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back({p.name(), p});
    return out;
}

}  // namespace

void save_checkpoint(const Generator<float>& g, const std::string& path) {
    CheckpointData data;
    data.kind = "generator";
    data.meta.emplace_back("input_shape", shape_token(g.image_shape()));
    data.meta.emplace_back("latent_dim", std::to_string(g.latent_dim()));
    data.meta.emplace_back("variational", g.variational() ? "1" : "0");
    data.specs.emplace_back("encoder", join_specs(g.encoder().specs()));
    data.specs.emplace_back("mu", join_specs(g.mu_head().specs()));
    if (g.variational()) data.specs.emplace_back("logvar", join_specs(g.logvar_head().specs()));
    data.specs.emplace_back("decoder", join_specs(g.decoder().specs()));
    data.tensors = named_parameters(g.parameters());
    write_checkpoint(data, path);
}

void save_checkpoint(const Classifier<float>& c, const std::string& path) {
    CheckpointData data;
    data.kind = "classifier";
    data.meta.emplace_back("input_shape", shape_token(c.net().input_shape()));
    data.specs.emplace_back("net", join_specs(c.net().specs()));
    data.tensors = named_parameters(c.parameters());
    write_checkpoint(data, path);
}

void save_checkpoint(const Predictor<float>& p, const std::string& path) {
    CheckpointData data;
    data.kind = "predictor";
    data.meta.emplace_back("input_shape", shape_token(p.net().input_shape()));
    data.meta.emplace_back("out_dim", std::to_string(p.out_dim()));
    data.specs.emplace_back("net", join_specs(p.net().specs()));
    data.tensors = named_parameters(p.parameters());
    write_checkpoint(data, path);
}

Generator<float> load_generator(const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    if (data.kind != "generator") {
        throw ConfigError("checkpoint '" + path + "' holds a " + data.kind +
                          ", expected a generator");
    }
    const Shape image_shape = parse_shape_token(meta_value(data, "input_shape"), "input_shape");
    const std::size_t latent = meta_count(data, "latent_dim");
    const bool variational = meta_value(data, "variational") == "1";

    Network<float> encoder("encoder", parse_spec_list(spec_value(data, "encoder")), image_shape,
                           0);
    const std::size_t feat = shape_numel(encoder.output_shape());
    Network<float> mu("mu", parse_spec_list(spec_value(data, "mu")), {feat}, 0);
    Network<float> logvar;
    if (variational) {
        logvar = Network<float>("logvar", parse_spec_list(spec_value(data, "logvar")), {feat}, 0);
    }
    Network<float> decoder("decoder", parse_spec_list(spec_value(data, "decoder")), {latent}, 0);

    Generator<float> g(std::move(encoder), std::move(mu), std::move(logvar), std::move(decoder),
                       image_shape, latent, variational);
    fill_parameters(g.parameters(), data.tensors, path);
    return g;
}

Classifier<float> load_classifier(const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    if (data.kind != "classifier") {
        throw ConfigError("checkpoint '" + path + "' holds a " + data.kind +
                          ", expected a classifier");
    }
    const Shape image_shape = parse_shape_token(meta_value(data, "input_shape"), "input_shape");
    Classifier<float> c(
        Network<float>("classifier", parse_spec_list(spec_value(data, "net")), image_shape, 0));
    fill_parameters(c.parameters(), data.tensors, path);
    return c;
}

Predictor<float> load_predictor(const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    if (data.kind != "predictor") {
        throw ConfigError("checkpoint '" + path + "' holds a " + data.kind +
                          ", expected a predictor");
    }
    const Shape image_shape = parse_shape_token(meta_value(data, "input_shape"), "input_shape");
    const std::size_t out_dim = meta_count(data, "out_dim");
    Predictor<float> p(
        Network<float>("predictor", parse_spec_list(spec_value(data, "net")), image_shape, 0),
        out_dim);
    fill_parameters(p.parameters(), data.tensors, path);
    return p;
}

}  // namespace cgen::nn
