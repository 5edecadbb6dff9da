#pragma once

// Text checkpoint for a forecaster and, optionally, an adapter.
//
//   adaptz-checkpoint 1
//   meta <key> <integer>           (lookback, horizon, width, n_blocks, tap_index,
//                                    adapter, adapter.use_feat, adapter.use_grad)
//   param <name> <rows> <cols>
//   <cols values>                  (<rows> lines, %.17g, single space separated)
//   ...
//   end
//
// Biases are stored as 1 x n blocks. Parameter names: block<i>.weight,
// block<i>.bias, head.weight, head.bias and adapter.{path_feat,path_grad,
// hidden,out}.{weight,bias}. Values round-trip exactly.

#include <adaptz/adapter.hpp>
#include <adaptz/forecaster.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace adaptz {

inline constexpr const char* kCheckpointMagic = "adaptz-checkpoint";
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    ForecastModel model;
    std::optional<AdapterNet> adapter;
};

namespace detail {

inline void write_block(std::ostream& out, const std::string& name, const Matrix& m) {
    out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    char buf[40];
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            if (c) out << ' ';
            out << buf;
        }
        out << '\n';
    }
}

inline void write_layer(std::ostream& out, const std::string& prefix, const AffineLayer& l) {
    write_block(out, prefix + ".weight", l.weight);
    write_block(out, prefix + ".bias", Matrix(1, l.bias.size(), l.bias));
}

inline AffineLayer take_layer(std::map<std::string, Matrix>& blocks, const std::string& prefix) {
    auto w = blocks.find(prefix + ".weight");
    auto b = blocks.find(prefix + ".bias");
    if (w == blocks.end() || b == blocks.end()) throw CheckpointError("checkpoint: missing parameters for " + prefix);
    if (b->second.rows() != 1) throw CheckpointError("checkpoint: " + prefix + ".bias must be 1 x n");
    AffineLayer l(w->second, b->second.data());
    blocks.erase(w);
    blocks.erase(b);
    return l;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const ForecastModel& model, const AdapterNet* adapter = nullptr) {
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "meta lookback " << model.lookback() << '\n';
    out << "meta horizon " << model.horizon() << '\n';
    out << "meta width " << model.width() << '\n';
    out << "meta n_blocks " << model.n_blocks() << '\n';
    out << "meta tap_index " << model.tap_index() << '\n';
    out << "meta adapter " << (adapter ? 1 : 0) << '\n';
    if (adapter) {
        out << "meta adapter.use_feat " << (adapter->use_feat() ? 1 : 0) << '\n';
        out << "meta adapter.use_grad " << (adapter->use_grad() ? 1 : 0) << '\n';
    }
    for (std::size_t i = 0; i < model.n_blocks(); ++i)
        detail::write_layer(out, "block" + std::to_string(i), model.blocks()[i]);
    detail::write_layer(out, "head", model.head());
    if (adapter) {
        detail::write_layer(out, "adapter.path_feat", adapter->path_feat());
        detail::write_layer(out, "adapter.path_grad", adapter->path_grad());
        detail::write_layer(out, "adapter.hidden", adapter->hidden());
        detail::write_layer(out, "adapter.out", adapter->out());
    }
    out << "end\n";
}

inline Checkpoint load_checkpoint(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic) throw CheckpointError("checkpoint: bad header");
    if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    std::map<std::string, long long> meta;
    std::map<std::string, Matrix> blocks;
    std::string tag;
    bool ended = false;
    while (in >> tag) {
        if (tag == "end") {
            ended = true;
            break;
        }
        if (tag == "meta") {
            std::string key;
            long long v = 0;
            if (!(in >> key >> v)) throw CheckpointError("checkpoint: malformed meta line");
            meta[key] = v;
        } else if (tag == "param") {
            std::string name;
            std::size_t rows = 0, cols = 0;
            if (!(in >> name >> rows >> cols)) throw CheckpointError("checkpoint: malformed param header");
            Matrix m(rows, cols);
            for (double& v : m.data()) {
                std::string tok;
                if (!(in >> tok)) throw CheckpointError("checkpoint: truncated values for " + name);
                try {
                    std::size_t used = 0;
                    v = std::stod(tok, &used);
                    if (used != tok.size()) throw std::invalid_argument(tok);
                } catch (const std::exception&) {
                    throw CheckpointError("checkpoint: bad value '" + tok + "' in " + name);
                }
            }
            blocks.emplace(name, std::move(m));
        } else {
            throw CheckpointError("checkpoint: unexpected token '" + tag + "'");
        }
    }
    if (!ended) throw CheckpointError("checkpoint: missing end marker");
    auto need = [&](const char* key) {
        auto it = meta.find(key);
        if (it == meta.end()) throw CheckpointError(std::string("checkpoint: missing meta ") + key);
        return it->second;
    };
    const auto n_blocks = static_cast<std::size_t>(need("n_blocks"));
    std::vector<AffineLayer> layers;
    for (std::size_t i = 0; i < n_blocks; ++i) layers.push_back(detail::take_layer(blocks, "block" + std::to_string(i)));
    AffineLayer head = detail::take_layer(blocks, "head");
    Checkpoint ck{ForecastModel(std::move(layers), std::move(head), static_cast<int>(need("tap_index"))), std::nullopt};
    if (ck.model.lookback() != static_cast<std::size_t>(need("lookback")) ||
        ck.model.horizon() != static_cast<std::size_t>(need("horizon")) ||
        ck.model.width() != static_cast<std::size_t>(need("width"))) {
        throw CheckpointError("checkpoint: meta shape does not match parameter shapes");
    }
    if (need("adapter")) {
        AffineLayer pf = detail::take_layer(blocks, "adapter.path_feat");
        AffineLayer pg = detail::take_layer(blocks, "adapter.path_grad");
        AffineLayer hd = detail::take_layer(blocks, "adapter.hidden");
        AffineLayer ot = detail::take_layer(blocks, "adapter.out");
        ck.adapter.emplace(std::move(pf), std::move(pg), std::move(hd), std::move(ot),
                           need("adapter.use_feat") != 0, need("adapter.use_grad") != 0);
    }
    if (!blocks.empty()) throw CheckpointError("checkpoint: unknown parameter " + blocks.begin()->first);
    return ck;
}

inline void save_checkpoint(const std::string& path, const ForecastModel& model, const AdapterNet* adapter = nullptr) {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write " + path);
    save_checkpoint(out, model, adapter);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open " + path);
    return load_checkpoint(in);
}

}  // namespace adaptz
