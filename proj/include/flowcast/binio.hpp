#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "flowcast/error.hpp"

namespace flowcast::io {

template <typename U>
void write_raw(std::ostream& out, U v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_raw(std::istream& in) {
    U v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!in) throw DataError("file truncated while reading");
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const auto len = read_raw<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw DataError("file truncated while reading");
    return s;
}

}  // namespace flowcast::io
