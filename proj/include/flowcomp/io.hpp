#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flowcomp/mlp.hpp"
#include "flowcomp/metrics.hpp"
#include "flowcomp/tensor.hpp"
#include "flowcomp/velocity.hpp"
#include "flowcomp/version.hpp"

namespace flowcomp {

// ---------------------------------------------------------------------------
// FTNS/1: ASCII header `FTNS 1 <channels> <height> <width>\n` followed by
// little-endian IEEE-754 float32 payload in row-major, channel-major order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_le32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
}

inline bool get_le32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

}  // namespace detail

inline void write_ftns_stream(std::ostream& out, const Tensor& t) {
    if (!t.all_finite()) {
        throw numeric_error("write_ftns: non-finite payload");
    }
    const Shape s = t.shape();
    out << "FTNS 1 " << s.channels << " " << s.height << " " << s.width << "\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
        detail::put_le32(out, std::bit_cast<std::uint32_t>(t[i]));
    }
}

inline Tensor read_ftns_stream(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw config_error("read_ftns: malformed header (missing header line)");
    }
    std::istringstream hdr(line);
    std::string magic;
    int version = 0;
    Shape shape;
    if (!(hdr >> magic >> version >> shape.channels >> shape.height >> shape.width) ||
        magic != "FTNS") {
        throw config_error("read_ftns: malformed header '" + line + "'");
    }
    std::string extra;
    if (hdr >> extra) {
        throw config_error("read_ftns: malformed header '" + line + "'");
    }
    if (version != 1) {
        throw config_error("read_ftns: unsupported version " + std::to_string(version));
    }
    if (!shape.valid()) {
        throw config_error("read_ftns: malformed header (non-positive dims)");
    }
    std::vector<float> data(shape.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint32_t bits;
        if (!detail::get_le32(in, bits)) {
            throw config_error("read_ftns: payload length too short for shape " + shape.str());
        }
        data[i] = std::bit_cast<float>(bits);
    }
    return Tensor::from_data(shape, std::move(data));
}

inline void write_ftns(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    write_ftns_stream(out, t);
    if (!out) throw config_error("write failed for '" + path + "'");
}

inline Tensor read_ftns(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "' for reading");
    Tensor t = read_ftns_stream(in);
    char probe;
    if (in.read(&probe, 1), in.gcount() != 0) {
        throw config_error("read_ftns: payload length exceeds header shape in '" + path + "'");
    }
    return t;
}

// ---------------------------------------------------------------------------
// PGM (P5, maxval 255). Values map via round-half-up of
// 255 * clamp((v - lo) / (hi - lo), 0, 1); loading scales back to [0,1].
// ---------------------------------------------------------------------------

inline void export_pgm(const Tensor& image, const std::string& path, float lo, float hi) {
    if (image.shape().channels != 1) {
        throw config_error("export_pgm: image must have exactly 1 channel, got " +
                           image.shape().str());
    }
    if (!(hi > lo)) throw config_error("export_pgm: need hi > lo");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << "P5\n" << image.shape().width << " " << image.shape().height << "\n255\n";
    const float span = hi - lo;
    for (std::size_t i = 0; i < image.size(); ++i) {
        float t = (image[i] - lo) / span;
        if (t < 0.0f) t = 0.0f;
        if (t > 1.0f) t = 1.0f;
        const int byte = static_cast<int>(std::floor(t * 255.0f + 0.5f));
        out.put(static_cast<char>(byte));
    }
    if (!out) throw config_error("write failed for '" + path + "'");
}

inline Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "' for reading");
    std::string magic;
    int width = 0, height = 0, maxval = 0;
    in >> magic >> width >> height >> maxval;
    if (magic != "P5" || width <= 0 || height <= 0 || maxval != 255) {
        throw config_error("read_pgm: expected binary PGM (P5, maxval 255) in '" + path + "'");
    }
    in.get();  // single whitespace after maxval
    std::vector<float> data(static_cast<std::size_t>(width) * height);
    for (auto& v : data) {
        const int byte = in.get();
        if (byte == EOF) throw config_error("read_pgm: truncated payload in '" + path + "'");
        v = static_cast<float>(byte) / 255.0f;
    }
    return Tensor::from_data(Shape{1, height, width}, std::move(data));
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit digest over file bytes, hex encoded.
// ---------------------------------------------------------------------------

inline std::string fnv1a_hex(const char* data, std::size_t len) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::string digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "' for digest");
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    return fnv1a_hex(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Run manifest: resolved config snapshot, input digests, outputs, version,
// duration. Round-trips losslessly through JSON.
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::map<std::string, std::string> input_digests;
    std::vector<std::string> outputs;
    std::string engine_version = kEngineVersion;
    double duration_seconds = 0.0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", command},
                              {"config", config},
                              {"inputs", input_digests},
                              {"outputs", outputs},
                              {"engine_version", engine_version},
                              {"duration_seconds", duration_seconds}};
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.input_digests = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        m.engine_version = j.at("engine_version").get<std::string>();
        m.duration_seconds = j.at("duration_seconds").get<double>();
        return m;
    }
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << m.to_json().dump(2) << "\n";
}

inline RunManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open '" + path + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("malformed manifest '" + path + "': " + e.what());
    }
    return RunManifest::from_json(j);
}

// ---------------------------------------------------------------------------
// FMDL/1 checkpoints: ASCII header (model kind plus layout lines), then
// FTNS/1 blocks for each parameter tensor in declaration order.
//   mlp:   latent / embed / layers lines, then per layer W (1,out,in) and
//          b (1,1,out).
//   gauss: mu tensor, then s as a (1,1,1) block.
// ---------------------------------------------------------------------------

inline void write_fmdl(const std::string& path, const MlpFieldModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    const MlpConfig& cfg = model.config();
    out << "FMDL 1 mlp\n";
    out << "latent " << cfg.latent.channels << " " << cfg.latent.height << " "
        << cfg.latent.width << "\n";
    out << "embed " << cfg.embed_dim << "\n";
    out << "layers";
    for (int s : MlpFieldModel::layer_sizes(cfg)) out << " " << s;
    out << "\n";
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const auto& layer = model.layer(l);
        std::vector<float> w(layer.w.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(layer.w[i]);
        write_ftns_stream(out, Tensor::from_data(Shape{1, layer.out, layer.in}, std::move(w)));
        std::vector<float> b(layer.b.size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<float>(layer.b[i]);
        write_ftns_stream(out, Tensor::from_data(Shape{1, 1, layer.out}, std::move(b)));
    }
    if (!out) throw config_error("write failed for '" + path + "'");
}

inline void write_fmdl(const std::string& path, const GaussianFieldModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << "FMDL 1 gauss\n";
    write_ftns_stream(out, model.mean());
    write_ftns_stream(out, Tensor::from_data(Shape{1, 1, 1}, {model.stddev()}));
    if (!out) throw config_error("write failed for '" + path + "'");
}

inline std::shared_ptr<VelocityModel> read_fmdl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw config_error("read_fmdl: missing header in '" + path + "'");
    std::istringstream hdr(line);
    std::string magic, kind;
    int version = 0;
    if (!(hdr >> magic >> version >> kind) || magic != "FMDL") {
        throw config_error("read_fmdl: malformed header '" + line + "'");
    }
    if (version != 1) {
        throw config_error("read_fmdl: unsupported version " + std::to_string(version));
    }

    if (kind == "gauss") {
        Tensor mu = read_ftns_stream(in);
        Tensor s = read_ftns_stream(in);
        if (s.size() != 1) throw config_error("read_fmdl: malformed gauss stddev block");
        return std::make_shared<GaussianFieldModel>(std::move(mu), s[0]);
    }
    if (kind != "mlp") {
        throw config_error("read_fmdl: unknown model kind '" + kind + "'");
    }

    MlpConfig cfg;
    std::vector<int> sizes;
    for (int field = 0; field < 3; ++field) {
        if (!std::getline(in, line)) throw config_error("read_fmdl: truncated mlp header");
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "latent") {
            ls >> cfg.latent.channels >> cfg.latent.height >> cfg.latent.width;
        } else if (key == "embed") {
            ls >> cfg.embed_dim;
        } else if (key == "layers") {
            int s;
            while (ls >> s) sizes.push_back(s);
        } else {
            throw config_error("read_fmdl: unexpected header line '" + line + "'");
        }
    }
    if (!cfg.latent.valid() || cfg.embed_dim < 0 || sizes.size() < 2) {
        throw config_error("read_fmdl: incomplete mlp header");
    }
    cfg.hidden.assign(sizes.begin() + 1, sizes.end() - 1);
    const std::vector<int> expect = MlpFieldModel::layer_sizes(cfg);
    if (expect != sizes) {
        throw config_error("read_fmdl: layer sizes do not match latent/embed layout");
    }
    std::vector<MlpFieldModel::Layer> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        MlpFieldModel::Layer layer;
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        const Tensor w = read_ftns_stream(in);
        if (w.shape() != Shape{1, layer.out, layer.in}) {
            throw config_error("read_fmdl: weight block shape mismatch at layer " +
                               std::to_string(l));
        }
        const Tensor b = read_ftns_stream(in);
        if (b.shape() != Shape{1, 1, layer.out}) {
            throw config_error("read_fmdl: bias block shape mismatch at layer " +
                               std::to_string(l));
        }
        layer.w.assign(w.data(), w.data() + w.size());
        layer.b.assign(b.data(), b.data() + b.size());
        layers.push_back(std::move(layer));
    }
    return std::make_shared<MlpFieldModel>(
        MlpFieldModel::from_layers(cfg, std::move(layers)));
}

// ---------------------------------------------------------------------------
// CSV emitters (loss curves and evaluation scores).
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out << i << "," << format_double(losses[i]) << "\n";
    }
}

inline void write_scores_csv(const std::string& path, const CompositionScore& score) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << "style_id,mmd2,bandwidth,n_region,n_ref\n";
    for (const StyleScore& s : score.styles) {
        out << s.style_id << "," << format_double(s.mmd2) << "," << format_double(s.bandwidth)
            << "," << s.n_region << "," << s.n_ref << "\n";
    }
    out << "average," << format_double(score.average) << ",,,\n";
}

}  // namespace flowcomp
