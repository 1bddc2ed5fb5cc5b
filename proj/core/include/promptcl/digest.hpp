// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace promptcl {

// 64-bit FNV-1a. Content digests only (parameter freezing, manifests),
// not cryptographic.
class Fnv1a {
public:
    static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ull;
    static constexpr std::uint64_t kPrime = 0x100000001b3ull;

    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= kPrime;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    void update(std::uint64_t v) { update(&v, sizeof(v)); }
    void update(std::int64_t v) { update(&v, sizeof(v)); }
    void update(int v) { update(&v, sizeof(v)); }
    void update(double v) { update(&v, sizeof(v)); }
    void update(const Eigen::MatrixXd& m) {
        update(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
    void update(const Eigen::VectorXd& v) {
        update(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
    }

    std::uint64_t value() const { return state_; }

private:
    std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.value();
}

std::string to_hex(std::uint64_t v);

}  // namespace promptcl
