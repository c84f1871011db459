#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <vector>

#include "difc/rng.hpp"
#include "difc/words.hpp"

using namespace difc;

TEST_CASE("one_hot places all mass at the index") {
  Word w = one_hot(2, 5);
  const std::vector<double> want{0, 0, 1, 0, 0};
  for (std::size_t i = 0; i < 5; ++i) CHECK(w.at(i) == want[i]);
  Word z = one_hot(0, 3);
  CHECK(z.at(0) == 1.0);
  CHECK(z.at(1) == 0.0);
  CHECK_THROWS_AS(one_hot(5, 5), std::out_of_range);
}

TEST_CASE("decode is argmax with ties toward the smallest index") {
  CHECK(decode(Word({5}, {0, 0, 1, 0, 0})) == 2);
  CHECK(decode(Word({2}, {0.4, 0.6})) == 1);
  CHECK(decode(Word({2}, {0.5, 0.5})) == 0);
}

TEST_CASE("unit_to_binary expected-bit readout, LSB first") {
  BitWord five = unit_to_binary(one_hot(5, 8), 3);
  CHECK(five.at(0) == doctest::Approx(1));  // 5 = 101b
  CHECK(five.at(1) == doctest::Approx(0));
  CHECK(five.at(2) == doctest::Approx(1));

  BitWord coin = unit_to_binary(Word({2}, {0.5, 0.5}), 1);
  CHECK(coin.at(0) == doctest::Approx(0.5));

  BitWord zero = unit_to_binary(one_hot(0, 16), 4);
  for (int i = 0; i < 4; ++i) CHECK(zero.at(i) == doctest::Approx(0.0));

  CHECK_THROWS_AS(unit_to_binary(one_hot(0, 9), 3), std::invalid_argument);
}

TEST_CASE("binary_to_unit two-bit closed form") {
  // bits (b0=1, b1=0) → value 1: [(1-b1)(1-b0), (1-b1)b0, b1(1-b0), b1b0]
  Word w = binary_to_unit(BitWord({2}, {1.0, 0.0}));
  REQUIRE(w.size() == 4);
  CHECK(w.at(0) == 0.0);
  CHECK(w.at(1) == 1.0);
  CHECK(w.at(2) == 0.0);
  CHECK(w.at(3) == 0.0);

  Word fair = binary_to_unit(BitWord({2}, {0.5, 0.5}));
  for (int k = 0; k < 4; ++k) CHECK(fair.at(k) == doctest::Approx(0.25));
}

TEST_CASE("binary_to_unit is a Word for any soft bits") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t b = 1 + rng.next_below(6);
    std::vector<double> bits(b);
    for (auto& v : bits) v = rng.uniform();
    Word w = binary_to_unit(BitWord({b}, bits));
    CHECK(is_word(w, 1e-9));
  }
}

TEST_CASE("conversion round-trips on dirac values up to b=6") {
  for (std::size_t b = 1; b <= 6; ++b) {
    const std::size_t n = std::size_t{1} << b;
    for (std::size_t k = 0; k < n; ++k) {
      Word w = binary_to_unit(unit_to_binary(one_hot(k, n), b));
      CHECK(decode(w) == k);
      CHECK(w.at(k) == doctest::Approx(1.0).epsilon(1e-12));

      std::vector<double> bits(b);
      for (std::size_t i = 0; i < b; ++i) bits[i] = static_cast<double>((k >> i) & 1);
      BitWord back = unit_to_binary(binary_to_unit(BitWord({b}, bits)), b);
      for (std::size_t i = 0; i < b; ++i)
        CHECK(back.at(i) == doctest::Approx(bits[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mod table slices match the appendix multiplication examples") {
  AluTable t5 = build_mod_table({"add", "mult"}, 5);
  Word r5 = table_lookup(t5, one_hot(1, 2), one_hot(2, 5), one_hot(4, 5));
  CHECK(decode(r5) == 3);  // 2*4 = 8 ≡ 3 (mod 5)
  CHECK(r5.at(3) == doctest::Approx(1.0));

  AluTable t9 = build_mod_table({"add", "mult"}, 9);
  Word r9 = table_lookup(t9, one_hot(1, 2), one_hot(2, 9), one_hot(4, 9));
  CHECK(decode(r9) == 8);  // in-range product selects the final element, 8

  for (std::size_t k = 0; k < 5; ++k) {
    Word rk = table_lookup(t5, one_hot(0, 2), one_hot(0, 5), one_hot(k, 5));
    CHECK(decode(rk) == k);  // 0 + k
  }
}

TEST_CASE("table_lookup add example and opcode mixtures") {
  AluTable t = build_mod_table({"add", "mult"}, 5);
  Word sum = table_lookup(t, one_hot(0, 2), one_hot(2, 5), one_hot(2, 5));
  CHECK(decode(sum) == 4);
  CHECK(sum.at(4) == doctest::Approx(1.0));

  AluTable t7 = build_mod_table({"add", "mult"}, 7);
  Word half = table_lookup(t7, Tensor({2}, {0.5, 0.5}), one_hot(2, 7), one_hot(3, 7));
  CHECK(half.at(5) == doctest::Approx(0.5));  // add → 5
  CHECK(half.at(6) == doctest::Approx(0.5));  // mult → 6
  CHECK(is_word(half, 1e-9));
}

TEST_CASE("dirac lookups match integer semantics exhaustively at n=8") {
  const std::vector<std::string> ops{"add", "sub",  "mul", "max", "min",
                                     "inc", "dec",  "copy"};
  const std::size_t n = 8;
  AluTable t = build_mod_table(ops, n);
  for (std::size_t f = 0; f < ops.size(); ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        Word out = table_lookup(t, one_hot(f, ops.size()), one_hot(i, n),
                                one_hot(j, n));
        CHECK(decode(out) == alu_semantics(ops[f], i, j, n));
        CHECK(out.at(decode(out)) == 1.0);
      }
    }
  }
}

TEST_CASE("table_lookup preserves the simplex on soft inputs") {
  AluTable t = build_mod_table({"add", "sub", "mul"}, 6);
  Rng rng(13);
  auto simplex = [&](std::size_t n) {
    std::vector<double> v(n);
    double z = 0;
    for (auto& x : v) z += (x = -std::log(1.0 - rng.uniform()));
    for (auto& x : v) x /= z;
    return Tensor({n}, std::move(v));
  };
  for (int trial = 0; trial < 30; ++trial) {
    Word out = table_lookup(t, simplex(3), simplex(6), simplex(6));
    CHECK(is_word(out, 1e-9));
  }
}

TEST_CASE("table capacity guard points at circuits") {
  CHECK_THROWS_WITH_AS(build_mod_table({"add"}, 129),
                       doctest::Contains("circuits"), std::invalid_argument);
  CHECK_THROWS_AS(build_mod_table({"frobnicate"}, 4), std::invalid_argument);
}

TEST_CASE("alu table serialization round-trips") {
  AluTable t = build_mod_table({"add", "sub", "mul", "inc"}, 7);
  const auto path = std::filesystem::temp_directory_path() / "difc_tbl_test.bin";
  save_alu_table(t, path.string());
  AluTable back = load_alu_table(path.string());
  CHECK(back.op_names == t.op_names);
  REQUIRE(back.table.shape() == t.table.shape());
  for (std::size_t i = 0; i < t.table.size(); ++i)
    CHECK(back.table.at(i) == t.table.at(i));

  // corrupt magic is rejected
  {
    std::FILE* fp = std::fopen(path.string().c_str(), "r+b");
    REQUIRE(fp != nullptr);
    std::fputc('X', fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(load_alu_table(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}
