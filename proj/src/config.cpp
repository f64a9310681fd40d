#include "hybridq/config.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hybridq {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

std::size_t log2_exact(std::size_t k) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < k) ++bits;
    return bits;
}

}  // namespace

std::size_t EngineConfig::bits_per_level() const {
    return subspaces * log2_exact(codewords);
}

std::size_t EngineConfig::code_bytes() const {
    return (levels() * bits_per_level() + 7) / 8;
}

void EngineConfig::validate() const {
    if (embed_dim == 0) fail("D must be positive");
    if (text_dim == 0) fail("Dt must be positive");
    if (subspaces == 0) fail("M must be positive");
    if (codewords < 2) fail("K must be at least 2");
    if (clusters == 0) fail("L must be positive");
    if (experts == 0) fail("N_E must be positive");
    if (embed_dim % subspaces != 0) fail("D must be divisible by M");
    if (!std::has_single_bit(codewords)) fail("K must be a power of two");
    if (codewords > 65536) fail("K exceeds the 16-bit index range");
    if (!(attn_scale > 0.0)) fail("alpha must be positive");
    if (!(temperature > 0.0)) fail("tau must be positive");
    if (learning_rate < 0.0) fail("learning_rate must be non-negative");
    if (lr_decay_every_steps == 0) fail("lr_decay_every_steps must be positive");
    if (!(lr_decay_factor > 0.0)) fail("lr_decay_factor must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
}

namespace {

struct Field {
    enum Kind { U64, F64 } kind;
    void* ptr;
};

std::map<std::string, Field> field_map(EngineConfig& c) {
    return {
        {"D", {Field::U64, &c.embed_dim}},
        {"Dt", {Field::U64, &c.text_dim}},
        {"M", {Field::U64, &c.subspaces}},
        {"K", {Field::U64, &c.codewords}},
        {"L", {Field::U64, &c.clusters}},
        {"N_E", {Field::U64, &c.experts}},
        {"alpha", {Field::F64, &c.attn_scale}},
        {"tau", {Field::F64, &c.temperature}},
        {"learning_rate", {Field::F64, &c.learning_rate}},
        {"lr_decay_every_steps", {Field::U64, &c.lr_decay_every_steps}},
        {"lr_decay_factor", {Field::F64, &c.lr_decay_factor}},
        {"batch_size", {Field::U64, &c.batch_size}},
        {"seed", {Field::U64, &c.seed}},
        {"max_epochs", {Field::U64, &c.max_epochs}},
        {"max_steps", {Field::U64, &c.max_steps}},
        {"patience", {Field::U64, &c.patience}},
    };
}

void assign(const Field& f, const std::string& key, const std::string& value,
            const std::string& origin) {
    try {
        std::size_t pos = 0;
        if (f.kind == Field::U64) {
            const unsigned long long v = std::stoull(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            *static_cast<std::size_t*>(f.ptr) = static_cast<std::size_t>(v);
        } else {
            const double v = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            *static_cast<double*>(f.ptr) = v;
        }
    } catch (const std::exception&) {
        fail(origin + ": bad value for '" + key + "': '" + value + "'");
    }
}

}  // namespace

EngineConfig parse_config_text(std::istream& in, const std::string& origin) {
    EngineConfig cfg;
    auto fields = field_map(cfg);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = fields.find(key);
        if (it == fields.end()) {
            fail(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        assign(it->second, key, value, origin);
    }
    // seed is size_t in the map but uint64_t in the struct on some ABIs;
    // both are 64-bit here.
    static_assert(sizeof(std::size_t) == sizeof(std::uint64_t));
    cfg.validate();
    return cfg;
}

EngineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open '" + path + "'");
    return parse_config_text(in, path);
}

void write_config_file(const EngineConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot write '" + path + "'");
    out << "D = " << cfg.embed_dim << "\n"
        << "Dt = " << cfg.text_dim << "\n"
        << "M = " << cfg.subspaces << "\n"
        << "K = " << cfg.codewords << "\n"
        << "L = " << cfg.clusters << "\n"
        << "N_E = " << cfg.experts << "\n"
        << "alpha = " << cfg.attn_scale << "\n"
        << "tau = " << cfg.temperature << "\n"
        << "learning_rate = " << cfg.learning_rate << "\n"
        << "lr_decay_every_steps = " << cfg.lr_decay_every_steps << "\n"
        << "lr_decay_factor = " << cfg.lr_decay_factor << "\n"
        << "batch_size = " << cfg.batch_size << "\n"
        << "seed = " << cfg.seed << "\n"
        << "max_epochs = " << cfg.max_epochs << "\n"
        << "max_steps = " << cfg.max_steps << "\n"
        << "patience = " << cfg.patience << "\n";
}

}  // namespace hybridq
