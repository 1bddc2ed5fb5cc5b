// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <string>

#include "doctest.h"
#include "promptcl/digest.hpp"

using promptcl::Fnv1a;
using promptcl::fnv1a;
using promptcl::to_hex;

TEST_CASE("known FNV-1a vectors") {
  // Standard 64-bit FNV-1a reference values.
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("incremental updates match one-shot hashing") {
  Fnv1a h;
  h.update("foo");
  h.update("bar");
  CHECK(h.value() == fnv1a("foobar"));
}

TEST_CASE("matrix digest is content-sensitive and deterministic") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(3, 4, 1.5);
  Fnv1a a, b;
  a.update(m);
  b.update(m);
  CHECK(a.value() == b.value());

  Eigen::MatrixXd m2 = m;
  m2(2, 3) = 1.5000001;
  Fnv1a c;
  c.update(m2);
  CHECK(c.value() != a.value());
}

TEST_CASE("to_hex is 16 lowercase hex chars") {
  CHECK(to_hex(0) == "0000000000000000");
  CHECK(to_hex(0xdeadbeefull) == "00000000deadbeef");
  CHECK(to_hex(0xFFFFFFFFFFFFFFFFull) == "ffffffffffffffff");
  const std::string h = to_hex(fnv1a("anything"));
  CHECK(h.size() == 16);
  for (char ch : h) {
    const bool ok = (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f');
    CHECK(ok);
  }
}
