// SPDX-License-Identifier: Apache-2.0
#include "promptcl/digest.hpp"

#include <array>

namespace promptcl {

std::string to_hex(std::uint64_t value) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::array<char, 16> buf;
    for (int i = 15; i >= 0; --i) {
        buf[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
        value >>= 4;
    }
    return std::string(buf.data(), buf.size());
}

}  // namespace promptcl
