#include "tsclab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace tsclab {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'C', 'L', 'A', 'B', 'W', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void put_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& f, const std::string& what) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!f) throw IoError("checkpoint: truncated while reading " + what);
    return v;
}

void put_doubles(std::ofstream& f, const double* p, std::size_t n) {
    f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::ifstream& f, double* p, std::size_t n, const std::string& what) {
    f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw IoError("checkpoint: truncated while reading " + what);
}

} // namespace

void save_weights(const std::string& path, const NetworkSpec& spec, const Weights& w) {
    check_shapes(spec, w);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    f.write(kMagic, sizeof kMagic);
    put_u32(f, kVersion);
    put_u32(f, static_cast<std::uint32_t>(spec.activation));
    put_u32(f, static_cast<std::uint32_t>(spec.layer_dims.size()));
    for (int d : spec.layer_dims) put_u32(f, static_cast<std::uint32_t>(d));
    for (const auto& layer : w.layers) {
        put_doubles(f, layer.w.data().data(), layer.w.size());
        put_doubles(f, layer.b.data(), layer.b.size());
    }
    f.flush();
    if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

std::pair<NetworkSpec, Weights> load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8] = {};
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError("checkpoint: '" + path + "' is not a weight checkpoint");
    const std::uint32_t version = get_u32(f, "version");
    if (version != kVersion)
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    const std::uint32_t act = get_u32(f, "activation");
    if (act != static_cast<std::uint32_t>(Activation::relu))
        throw IoError("checkpoint: unknown activation id " + std::to_string(act));
    const std::uint32_t n_dims = get_u32(f, "dimension count");
    if (n_dims < 3 || n_dims > 1024) throw IoError("checkpoint: implausible dimension count");

    NetworkSpec spec;
    spec.activation = static_cast<Activation>(act);
    spec.layer_dims.resize(n_dims);
    for (auto& d : spec.layer_dims) {
        d = static_cast<int>(get_u32(f, "layer dimension"));
        if (d < 1) throw IoError("checkpoint: non-positive layer dimension");
    }

    Weights w;
    w.layers.resize(spec.num_layers());
    for (int l = 0; l < spec.num_layers(); ++l) {
        const std::size_t d_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        const std::size_t d_in = static_cast<std::size_t>(spec.layer_dims[l]);
        w.layers[l].w = Matrix(d_out, d_in);
        get_doubles(f, w.layers[l].w.data().data(), d_out * d_in, "layer matrix");
        w.layers[l].b.assign(d_out, 0.0);
        get_doubles(f, w.layers[l].b.data(), d_out, "layer bias");
    }
    // Exactly the payload and nothing more.
    char extra = 0;
    f.read(&extra, 1);
    if (f.gcount() != 0) throw IoError("checkpoint: trailing bytes after payload");
    return {std::move(spec), std::move(w)};
}

} // namespace tsclab
