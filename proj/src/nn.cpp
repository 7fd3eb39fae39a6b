#include "flowcast/nn.hpp"

#include <istream>
#include <ostream>

namespace flowcast::nn {

namespace {

template <typename U>
void write_raw(std::ostream& out, U v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_raw(std::istream& in) {
    U v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!in) throw DataError("parameter blob truncated");
    return v;
}

}  // namespace

void save_params_f32(const std::vector<std::pair<std::string, Tensor<float>>>& entries,
                     std::ostream& out) {
    out.write(kParamMagic, 4);
    write_raw<std::uint32_t>(out, kParamVersion);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<std::uint32_t>(out, 2);
        write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(t.n));
        write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(t.m));
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    }
    if (!out) throw DataError("failed writing parameter blob");
}

std::vector<std::pair<std::string, Tensor<float>>> load_params_f32(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kParamMagic, 4) != 0)
        throw DataError("not a parameter blob (bad magic)");
    const auto version = read_raw<std::uint32_t>(in);
    if (version != kParamVersion)
        throw DataError("unsupported parameter blob version " + std::to_string(version));
    const auto count = read_raw<std::uint32_t>(in);

    std::vector<std::pair<std::string, Tensor<float>>> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("parameter blob truncated");
        const auto rank = read_raw<std::uint32_t>(in);
        if (rank != 2) throw DataError("parameter " + name + " has unsupported rank");
        const auto rows = read_raw<std::uint64_t>(in);
        const auto cols = read_raw<std::uint64_t>(in);
        Tensor<float> t(static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols));
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(float)));
        if (!in) throw DataError("parameter blob truncated");
        entries.emplace_back(std::move(name), std::move(t));
    }
    return entries;
}

}  // namespace flowcast::nn
