#include "hybridq/feature_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hybridq {

static_assert(std::endian::native == std::endian::little,
              "feature file writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'Q', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error("feature file '" + path + "': " + msg);
}

void write_rows(std::ostream& out, const VecArray& rows) {
    std::vector<float> f(rows.data.size());
    for (std::size_t i = 0; i < rows.data.size(); ++i) {
        f[i] = static_cast<float>(rows.data[i]);
    }
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
}

void read_rows(std::istream& in, const std::string& path, std::size_t count,
               std::size_t dim, VecArray& rows) {
    rows = VecArray(count, dim);
    std::vector<float> f(count * dim);
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) fail(path, "truncated");
    for (std::size_t i = 0; i < f.size(); ++i) rows.data[i] = f[i];
}

}  // namespace

void write_feature_file(const std::vector<TokenBag>& bags, const std::string& path) {
    if (bags.empty()) fail(path, "refusing to write an empty bag list");
    const View view = bags[0].view;
    const std::size_t dim = bags[0].tokens.dim;
    const std::size_t condensed = bags[0].condensed.size();
    for (const auto& b : bags) {
        if (b.view != view || b.tokens.dim != dim || b.condensed.size() != condensed ||
            b.condensed.dim != dim) {
            fail(path, "bags disagree on view/dimensions");
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    auto put = [&out](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };

    out.write(kMagic, sizeof(kMagic));
    put(kVersion);
    put(static_cast<std::uint8_t>(view));
    put(static_cast<std::uint32_t>(dim));
    put(static_cast<std::uint32_t>(condensed));
    put(static_cast<std::uint32_t>(bags.size()));
    for (const auto& b : bags) {
        write_rows(out, b.condensed);
        put(static_cast<std::uint32_t>(b.tokens.size()));
        write_rows(out, b.tokens);
    }
    if (!out) fail(path, "write failed");
}

std::vector<TokenBag> read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    auto get = [&in, &path](auto& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) fail(path, "truncated header");
    };

    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) fail(path, "bad magic");
    std::uint32_t version = 0;
    get(version);
    if (version != kVersion) fail(path, "unsupported version");

    std::uint8_t view_tag = 0;
    std::uint32_t dim = 0, condensed = 0, count = 0;
    get(view_tag);
    get(dim);
    get(condensed);
    get(count);
    if (view_tag > 1) fail(path, "bad view tag");
    const View view = static_cast<View>(view_tag);
    if (dim == 0 || condensed == 0) fail(path, "bad header counts");
    if (view == View::Query && condensed != 1) {
        fail(path, "query files carry exactly one condensed token");
    }

    std::vector<TokenBag> bags(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        bags[i].view = view;
        read_rows(in, path, condensed, dim, bags[i].condensed);
        std::uint32_t tokens = 0;
        in.read(reinterpret_cast<char*>(&tokens), sizeof(tokens));
        if (!in) fail(path, "truncated");
        if (tokens == 0) fail(path, "instance with zero tokens");
        read_rows(in, path, tokens, dim, bags[i].tokens);
    }
    in.peek();
    if (!in.eof()) fail(path, "trailing bytes");
    return bags;
}

}  // namespace hybridq
