#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tam/rng.hpp"
#include "tam/serialize.hpp"
#include "tam/tensor.hpp"

using tam::Tensor;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tensor blob round-trips bit-exactly") {
  tam::Rng rng(5);
  auto t = Tensor<float>::make({3, 4, 2});
  for (auto& v : t->data) v = static_cast<float>(rng.normal());

  std::stringstream ss;
  tam::save_tensor(ss, *t);
  auto back = tam::load_tensor<float>(ss);
  CHECK(back->shape == t->shape);
  CHECK(back->data == t->data);
}

TEST_CASE("tensor blob layout: magic, version, rank, dims, float32 payload") {
  auto t = Tensor<float>::from_values({2}, {1.0f, -2.5f});
  std::stringstream ss;
  tam::save_tensor(ss, *t);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 4 + 4 + 8 + 8);
  CHECK(bytes.substr(0, 4) == "TAMT");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version, little-endian
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);  // rank
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);  // dim 0
  // 1.0f little-endian = 00 00 80 3f
  CHECK(static_cast<unsigned char>(bytes[20]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[21]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[22]) == 0x80);
  CHECK(static_cast<unsigned char>(bytes[23]) == 0x3f);
}

TEST_CASE("tensor load rejects corrupt streams") {
  std::stringstream bad_magic("XXXX");
  CHECK_THROWS_WITH_AS(tam::load_tensor<float>(bad_magic), doctest::Contains("magic"),
                       std::runtime_error);

  auto t = Tensor<float>::from_values({4}, {1, 2, 3, 4});
  std::stringstream ss;
  tam::save_tensor(ss, *t);
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_WITH_AS(tam::load_tensor<float>(truncated), doctest::Contains("end of file"),
                       std::runtime_error);
}

TEST_CASE("double tensors serialize through float32") {
  auto t = Tensor<double>::from_values({2}, {0.1, 2.0});
  std::stringstream ss;
  tam::save_tensor(ss, *t);
  auto back = tam::load_tensor<double>(ss);
  CHECK(back->data[0] == doctest::Approx(0.1).epsilon(1e-7));
  CHECK(back->data[1] == 2.0);
}

TEST_CASE("tensor file helpers report unopenable paths") {
  auto t = Tensor<float>::from_values({1}, {1});
  CHECK_THROWS_WITH_AS(tam::save_tensor_file("/nonexistent-dir/x.tamt", *t),
                       doctest::Contains("/nonexistent-dir/x.tamt"), std::runtime_error);
  CHECK_THROWS_WITH_AS(tam::load_tensor_file<float>("/nonexistent-dir/x.tamt"),
                       doctest::Contains("/nonexistent-dir/x.tamt"), std::runtime_error);

  const auto path = temp_path("roundtrip.tamt");
  tam::save_tensor_file(path, *t);
  auto back = tam::load_tensor_file<float>(path);
  CHECK(back->data == t->data);
  std::filesystem::remove(path);
}

TEST_CASE("rng state string round-trips the generator") {
  tam::Rng a(123);
  (void)a.normal();  // leaves a cached spare value
  const auto state = a.save_state();
  tam::Rng b(0);
  b.load_state(state);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK_THROWS_AS(b.load_state("not a state"), std::runtime_error);
}
