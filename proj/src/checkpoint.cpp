#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "hybridq/parameters.hpp"

// Checkpoint container layout (all little-endian):
//   magic "HQCP", u32 version,
//   config as 10 x u64 followed by 5 x f64 (see field order below),
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 ndim, u64 dims[ndim], f32 data[].

namespace hybridq {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'Q', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error("checkpoint '" + path + "': " + msg);
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) fail(path, "truncated");
    return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    std::vector<float> f(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) f[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
}

void write_config(std::ostream& out, const EngineConfig& c) {
    const std::uint64_t u[10] = {c.embed_dim, c.text_dim,  c.subspaces,
                                 c.codewords, c.clusters,  c.experts,
                                 c.lr_decay_every_steps, c.batch_size,
                                 c.seed,      c.max_epochs};
    for (auto v : u) put<std::uint64_t>(out, v);
    const double f[5] = {c.attn_scale, c.temperature, c.learning_rate,
                         c.lr_decay_factor, 0.0 /* reserved */};
    for (auto v : f) put<double>(out, v);
    put<std::uint64_t>(out, c.max_steps);
    put<std::uint64_t>(out, c.patience);
}

EngineConfig read_config(std::istream& in, const std::string& path) {
    EngineConfig c;
    c.embed_dim = get<std::uint64_t>(in, path);
    c.text_dim = get<std::uint64_t>(in, path);
    c.subspaces = get<std::uint64_t>(in, path);
    c.codewords = get<std::uint64_t>(in, path);
    c.clusters = get<std::uint64_t>(in, path);
    c.experts = get<std::uint64_t>(in, path);
    c.lr_decay_every_steps = get<std::uint64_t>(in, path);
    c.batch_size = get<std::uint64_t>(in, path);
    c.seed = get<std::uint64_t>(in, path);
    c.max_epochs = get<std::uint64_t>(in, path);
    c.attn_scale = get<double>(in, path);
    c.temperature = get<double>(in, path);
    c.learning_rate = get<double>(in, path);
    c.lr_decay_factor = get<double>(in, path);
    (void)get<double>(in, path);  // reserved
    c.max_steps = get<std::uint64_t>(in, path);
    c.patience = get<std::uint64_t>(in, path);
    return c;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    write_config(out, params.config);

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for_each_trainable(params, [&](const std::string& name, const Tensor& t) {
        tensors.emplace_back(name, &t);
    });
    tensors.emplace_back("vlad.bn_running_mean", &params.bn_running_mean);
    tensors.emplace_back("vlad.bn_running_var", &params.bn_running_var);

    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) put_tensor(out, name, *t);
    if (!out) fail(path, "write failed");
}

ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        fail(path, "bad magic");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion) {
        fail(path, "unsupported version " + std::to_string(version));
    }
    const EngineConfig cfg = read_config(in, path);
    cfg.validate();

    // Start from the correct shapes, then overwrite from the file.
    ParameterSet params = init_parameters(cfg);

    const auto count = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) fail(path, "truncated");
        const auto ndim = get<std::uint32_t>(in, path);
        std::vector<std::size_t> shape(ndim);
        std::size_t total = 1;
        for (auto& d : shape) {
            d = get<std::uint64_t>(in, path);
            total *= d;
        }
        std::vector<float> f(total);
        in.read(reinterpret_cast<char*>(f.data()),
                static_cast<std::streamsize>(total * sizeof(float)));
        if (!in) fail(path, "truncated tensor '" + name + "'");

        Tensor* dst = nullptr;
        for_each_trainable(params, [&](const std::string& n, Tensor& t) {
            if (n == name) dst = &t;
        });
        if (name == "vlad.bn_running_mean") dst = &params.bn_running_mean;
        if (name == "vlad.bn_running_var") dst = &params.bn_running_var;
        if (dst == nullptr) fail(path, "unknown tensor '" + name + "'");
        if (dst->shape != shape) fail(path, "shape mismatch for '" + name + "'");
        for (std::size_t j = 0; j < total; ++j) dst->data[j] = f[j];
    }
    return params;
}

}  // namespace hybridq
